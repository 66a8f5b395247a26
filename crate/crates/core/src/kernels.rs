//! Covariance kernels and closed-form application of differential operators.
//!
//! Operators act on the first argument (`left`) and/or second argument
//! (`right`) of a kernel. Every supported combination has a hand-derived
//! closed form; anything else returns [`PnmolError::Unsupported`].

use nalgebra::DMatrix;

use crate::{PnmolError, Result};

/// A point in `R^d`.
pub type Point = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// `exp(−r²‖x−y‖²)`.
    SquaredExponential { input_scale: f64 },
    /// `(1 + xᵀy)^p`.
    Polynomial { degree: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub family: KernelFamily,
    pub dim: usize,
}

pub const DEFAULT_INPUT_SCALE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub enum DiffOperator {
    Identity,
    Laplacian,
    /// Derivative along a unit direction; build with [`DiffOperator::directional`].
    DirectionalDerivative(Vec<f64>),
}

impl DiffOperator {
    pub fn directional(direction: Vec<f64>) -> Result<Self> {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
            return Err(PnmolError::InvalidArgument(format!(
                "direction must have unit norm, got {norm}"
            )));
        }
        Ok(Self::DirectionalDerivative(direction))
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Self::DirectionalDerivative(n) if n.len() != dim => Err(PnmolError::DimensionMismatch(
                format!("direction has length {}, kernel dimension is {dim}", n.len()),
            )),
            _ => Ok(()),
        }
    }
}

impl Kernel {
    pub fn squared_exponential(input_scale: f64, dim: usize) -> Result<Self> {
        if !(input_scale > 0.0 && input_scale.is_finite()) {
            return Err(PnmolError::InvalidArgument(format!(
                "input scale must be positive, got {input_scale}"
            )));
        }
        Self::checked(KernelFamily::SquaredExponential { input_scale }, dim)
    }

    pub fn polynomial(degree: u32, dim: usize) -> Result<Self> {
        Self::checked(KernelFamily::Polynomial { degree }, dim)
    }

    fn checked(family: KernelFamily, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(PnmolError::InvalidArgument("kernel dimension must be positive".into()));
        }
        Ok(Self { family, dim })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.eval_pair(&DiffOperator::Identity, &DiffOperator::Identity, x, y)
    }

    /// `(L_x R_y k)(x, y)` for the operators `left` on `x` and `right` on `y`.
    pub fn eval_pair(
        &self,
        left: &DiffOperator,
        right: &DiffOperator,
        x: &[f64],
        y: &[f64],
    ) -> Result<f64> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(PnmolError::DimensionMismatch(format!(
                "points of dimension {} and {} for a {}-dimensional kernel",
                x.len(),
                y.len(),
                self.dim
            )));
        }
        left.check_dim(self.dim)?;
        right.check_dim(self.dim)?;
        Ok(match self.family {
            KernelFamily::SquaredExponential { input_scale } => {
                se_pair(input_scale * input_scale, left, right, x, y)
            }
            KernelFamily::Polynomial { degree } => poly_pair(degree, left, right, x, y),
        })
    }

    pub fn apply_left(&self, op: &DiffOperator) -> Result<OperatorKernel> {
        OperatorKernel::new(*self, op.clone(), DiffOperator::Identity)
    }

    pub fn apply_both(&self, op: &DiffOperator) -> Result<OperatorKernel> {
        OperatorKernel::new(*self, op.clone(), op.clone())
    }

    pub fn apply_pair(&self, left: &DiffOperator, right: &DiffOperator) -> Result<OperatorKernel> {
        OperatorKernel::new(*self, left.clone(), right.clone())
    }

    pub fn gram(&self, xs: &[Point], ys: &[Point]) -> Result<DMatrix<f64>> {
        self.apply_left(&DiffOperator::Identity)?.gram(xs, ys)
    }
}

/// A kernel with fixed operators applied to each argument.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorKernel {
    kernel: Kernel,
    left: DiffOperator,
    right: DiffOperator,
}

impl OperatorKernel {
    fn new(kernel: Kernel, left: DiffOperator, right: DiffOperator) -> Result<Self> {
        left.check_dim(kernel.dim)?;
        right.check_dim(kernel.dim)?;
        Ok(Self { kernel, left, right })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.kernel.eval_pair(&self.left, &self.right, x, y)
    }

    pub fn gram(&self, xs: &[Point], ys: &[Point]) -> Result<DMatrix<f64>> {
        let dim = self.kernel.dim;
        if let Some(p) = xs.iter().chain(ys).find(|p| p.len() != dim) {
            return Err(PnmolError::DimensionMismatch(format!(
                "point of dimension {} for a {dim}-dimensional kernel",
                p.len()
            )));
        }
        Ok(gram(|x, y| self.eval(x, y).expect("dimensions checked"), xs, ys))
    }
}

/// `G[i][j] = f(X[i], Y[j])`.
pub fn gram<F>(f: F, xs: &[Point], ys: &[Point]) -> DMatrix<f64>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    DMatrix::from_fn(xs.len(), ys.len(), |i, j| f(&xs[i], &ys[j]))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn se_pair(a: f64, left: &DiffOperator, right: &DiffOperator, x: &[f64], y: &[f64]) -> f64 {
    use DiffOperator::*;
    let d: Vec<f64> = x.iter().zip(y).map(|(u, v)| u - v).collect();
    let s = dot(&d, &d);
    let m = x.len() as f64;
    let k = (-a * s).exp();
    // Laplacian of exp(−a‖d‖²) in d, divided by the kernel value
    let g = 4.0 * a * a * s - 2.0 * a * m;
    match (left, right) {
        (Identity, Identity) => k,
        (Laplacian, Identity) | (Identity, Laplacian) => g * k,
        (Laplacian, Laplacian) => (8.0 * a * a * m - 32.0 * a * a * a * s + g * g) * k,
        (DirectionalDerivative(n), Identity) => -2.0 * a * dot(n, &d) * k,
        (Identity, DirectionalDerivative(n)) => 2.0 * a * dot(n, &d) * k,
        (DirectionalDerivative(n), DirectionalDerivative(q)) => {
            2.0 * a * (dot(n, q) - 2.0 * a * dot(n, &d) * dot(q, &d)) * k
        }
        (Laplacian, DirectionalDerivative(q)) => 2.0 * a * dot(q, &d) * (g - 4.0 * a) * k,
        (DirectionalDerivative(n), Laplacian) => -2.0 * a * dot(n, &d) * (g - 4.0 * a) * k,
    }
}

/// `p(p−1)…(p−j+1) · c^(p−j)`, zero when `j > p`.
fn falling_pow(p: u32, j: u32, c: f64) -> f64 {
    if j > p {
        return 0.0;
    }
    let coef: f64 = (0..j).map(|i| (p - i) as f64).product();
    coef * c.powi((p - j) as i32)
}

fn poly_pair(p: u32, left: &DiffOperator, right: &DiffOperator, x: &[f64], y: &[f64]) -> f64 {
    use DiffOperator::*;
    let c = 1.0 + dot(x, y);
    let m = x.len() as f64;
    let (xx, yy, xy) = (dot(x, x), dot(y, y), dot(x, y));
    match (left, right) {
        (Identity, Identity) => falling_pow(p, 0, c),
        (Laplacian, Identity) => falling_pow(p, 2, c) * yy,
        (Identity, Laplacian) => falling_pow(p, 2, c) * xx,
        (Laplacian, Laplacian) => {
            falling_pow(p, 4, c) * xx * yy
                + 4.0 * falling_pow(p, 3, c) * xy
                + 2.0 * m * falling_pow(p, 2, c)
        }
        (DirectionalDerivative(n), Identity) => falling_pow(p, 1, c) * dot(n, y),
        (Identity, DirectionalDerivative(q)) => falling_pow(p, 1, c) * dot(q, x),
        (DirectionalDerivative(n), DirectionalDerivative(q)) => {
            falling_pow(p, 2, c) * dot(n, y) * dot(q, x) + falling_pow(p, 1, c) * dot(n, q)
        }
        (Laplacian, DirectionalDerivative(q)) => {
            falling_pow(p, 3, c) * dot(q, x) * yy + 2.0 * falling_pow(p, 2, c) * dot(q, y)
        }
        (DirectionalDerivative(n), Laplacian) => {
            falling_pow(p, 3, c) * xx * dot(n, y) + 2.0 * falling_pow(p, 2, c) * dot(n, x)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const STEP: f64 = 1e-4;

    fn se(r: f64, d: usize) -> Kernel {
        Kernel::squared_exponential(r, d).unwrap()
    }

    #[test]
    fn se_values() {
        assert_eq!(se(1.0, 1).eval(&[0.3], &[0.3]).unwrap(), 1.0);
        assert_relative_eq!(se(0.25, 1).eval(&[0.0], &[2.0]).unwrap(), (-0.25f64).exp());
        let k = Kernel::polynomial(1, 1).unwrap();
        assert_eq!(k.eval(&[0.0], &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = se(1.0, 2);
        assert!(matches!(k.eval(&[0.0], &[0.0, 1.0]), Err(PnmolError::DimensionMismatch(_))));
        let op = DiffOperator::directional(vec![1.0]).unwrap();
        assert!(k.apply_left(&op).is_err());
    }

    #[test]
    fn directional_requires_unit_norm() {
        assert!(DiffOperator::directional(vec![1.0, 1.0]).is_err());
        assert!(DiffOperator::directional(vec![0.6, 0.8]).is_ok());
    }

    #[test]
    fn gram_shapes_and_values() {
        let k = se(1.0, 1);
        let one = k.gram(&[vec![0.2]], &[vec![0.2]]).unwrap();
        assert_eq!(one[(0, 0)], 1.0);
        let xs = vec![vec![0.0], vec![1.0]];
        let g = k.gram(&xs, &xs).unwrap();
        let e = (-1.0f64).exp();
        assert_relative_eq!(g, DMatrix::from_row_slice(2, 2, &[1.0, e, e, 1.0]));
        let three = vec![vec![0.0], vec![0.5], vec![1.0]];
        assert_eq!(k.gram(&three, &xs).unwrap().shape(), (3, 2));
    }

    #[test]
    fn laplacian_closed_forms_at_zero_distance() {
        let r = 0.25;
        let k = se(r, 1);
        let lap = k.apply_left(&DiffOperator::Laplacian).unwrap();
        assert_relative_eq!(lap.eval(&[0.4], &[0.4]).unwrap(), -2.0 * r * r, epsilon = 1e-15);
        let lap2 = k.apply_both(&DiffOperator::Laplacian).unwrap();
        assert_relative_eq!(lap2.eval(&[0.4], &[0.4]).unwrap(), 12.0 * r.powi(4), epsilon = 1e-15);
        let dd = k.apply_left(&DiffOperator::directional(vec![1.0]).unwrap()).unwrap();
        assert_eq!(dd.eval(&[0.4], &[0.4]).unwrap(), 0.0);
    }

    #[test]
    fn identity_operator_matches_eval() {
        let k = se(0.7, 2);
        let x = [0.1, -0.3];
        let y = [0.5, 0.2];
        let id = DiffOperator::Identity;
        assert_eq!(k.apply_left(&id).unwrap().eval(&x, &y).unwrap(), k.eval(&x, &y).unwrap());
        assert_eq!(k.apply_both(&id).unwrap().eval(&x, &y).unwrap(), k.eval(&x, &y).unwrap());
    }

    #[test]
    fn apply_both_gram_is_symmetric() {
        let xs: Vec<Point> = (0..6).map(|i| vec![0.1 * i as f64, 0.05 * (i * i) as f64]).collect();
        for k in [se(0.8, 2), Kernel::polynomial(4, 2).unwrap()] {
            for op in [DiffOperator::Laplacian, DiffOperator::directional(vec![0.6, -0.8]).unwrap()] {
                let g = k.apply_both(&op).unwrap().gram(&xs, &xs).unwrap();
                assert_relative_eq!(g.clone(), g.transpose(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn polynomial_gram_rank_bound() {
        // (p + d choose d) = 6 for p = 2, d = 2
        let k = Kernel::polynomial(2, 2).unwrap();
        let xs: Vec<Point> = (0..9)
            .map(|i| vec![(i % 3) as f64 * 0.5 - 0.5, (i / 3) as f64 * 0.5 - 0.5])
            .collect();
        let g = k.gram(&xs, &xs).unwrap();
        let sv = g.svd(false, false).singular_values;
        let rank = sv.iter().filter(|&&s| s > 1e-10 * sv.max()).count();
        assert_eq!(rank, 6);
    }

    /// Finite-difference value with a bound on its floating-point round-off.
    struct Fd {
        value: f64,
        roundoff: f64,
    }

    fn shifted(z: &[f64], i: usize, by: f64) -> Vec<f64> {
        let mut p = z.to_vec();
        p[i] += by;
        p
    }

    fn fd_apply<F: Fn(&[f64]) -> f64>(op: &DiffOperator, f: F, z: &[f64]) -> Fd {
        let eps = f64::EPSILON;
        let mut value = 0.0;
        let mut roundoff = 0.0;
        match op {
            DiffOperator::Identity => value = f(z),
            DiffOperator::Laplacian => {
                for i in 0..z.len() {
                    let (p, c, m) = (f(&shifted(z, i, STEP)), f(z), f(&shifted(z, i, -STEP)));
                    value += (p - 2.0 * c + m) / (STEP * STEP);
                    roundoff += 4.0 * eps * (p.abs() + 2.0 * c.abs() + m.abs()) / (STEP * STEP);
                }
            }
            DiffOperator::DirectionalDerivative(n) => {
                for (i, ni) in n.iter().enumerate() {
                    let (p, m) = (f(&shifted(z, i, STEP)), f(&shifted(z, i, -STEP)));
                    value += ni * (p - m) / (2.0 * STEP);
                    roundoff += 4.0 * eps * ni.abs() * (p.abs() + m.abs()) / (2.0 * STEP);
                }
            }
        }
        Fd { value, roundoff }
    }

    /// Relative error below 1e-5 once the round-off of the difference
    /// quotient is accounted for.
    fn assert_fd_close(exact: f64, fd: Fd) {
        let err = (exact - fd.value).abs() - fd.roundoff;
        let rel = err.max(0.0) / exact.abs().max(1e-2);
        assert!(rel < 1e-5, "closed form {exact} vs finite difference {} (rel {rel:e})", fd.value);
    }

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter().map(|a| a / n).collect()
    }

    fn check_fd(k: &Kernel, x: &[f64], y: &[f64], dir: &[f64]) {
        let ops = [
            DiffOperator::Identity,
            DiffOperator::Laplacian,
            DiffOperator::directional(unit(dir)).unwrap(),
        ];
        for left in &ops {
            // left operator from differences of the plain kernel in x
            let exact = k.apply_left(left).unwrap().eval(x, y).unwrap();
            assert_fd_close(exact, fd_apply(left, |z| k.eval(z, y).unwrap(), x));
            for right in &ops {
                // right operator from differences of the left-applied closed form in y
                let exact = k.apply_pair(left, right).unwrap().eval(x, y).unwrap();
                let inner = k.apply_left(left).unwrap();
                assert_fd_close(exact, fd_apply(right, |z| inner.eval(x, z).unwrap(), y));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn se_matches_finite_differences(
            x in prop::collection::vec(-1.0f64..1.0, 2),
            y in prop::collection::vec(-1.0f64..1.0, 2),
            dir in prop::collection::vec(0.1f64..1.0, 2),
            r in prop::sample::select(vec![0.25, 0.5, 1.0]),
        ) {
            check_fd(&se(r, 2), &x, &y, &dir);
            check_fd(&se(r, 1), &x[..1], &y[..1], &[1.0]);
        }

        // points keep 1 + xᵀy ≥ 1/2, away from the zeros of the kernel
        #[test]
        fn polynomial_matches_finite_differences(
            x in prop::collection::vec(-0.5f64..0.5, 2),
            y in prop::collection::vec(-0.5f64..0.5, 2),
            dir in prop::collection::vec(0.1f64..1.0, 2),
            p in 0u32..6,
        ) {
            check_fd(&Kernel::polynomial(p, 2).unwrap(), &x, &y, &dir);
        }

        #[test]
        fn kernels_are_symmetric_and_nonnegative_on_diagonal(
            x in prop::collection::vec(-2.0f64..2.0, 3),
            y in prop::collection::vec(-2.0f64..2.0, 3),
            p in 0u32..5,
        ) {
            for k in [se(0.25, 3), Kernel::polynomial(p, 3).unwrap()] {
                prop_assert!(k.eval(&x, &x).unwrap() >= 0.0);
                prop_assert!((k.eval(&x, &y).unwrap() - k.eval(&y, &x).unwrap()).abs() < 1e-12);
            }
        }
    }
}
