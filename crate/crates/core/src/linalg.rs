//! Dense linear-algebra helpers shared by the discretization and the filter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{PnmolError, Result};

/// Relative nuggets tried after a failed unjittered factorization:
/// `1e-12 · mean(diag)`, multiplied by 10 up to `1e-6 · mean(diag)`.
const JITTER_LADDER: [f64; 7] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factor of `A + nugget·I` for the smallest nugget on the jitter
/// ladder that makes the factorization succeed.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    chol: Cholesky<f64, Dyn>,
    nugget: f64,
}

impl JitteredCholesky {
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(PnmolError::DimensionMismatch(format!(
                "cannot factor a {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(PnmolError::Numerical("non-finite matrix entry".into()));
        }
        if let Some(chol) = Cholesky::new(a.clone()) {
            return Ok(Self { chol, nugget: 0.0 });
        }
        let scale = if n == 0 { 0.0 } else { a.diagonal().mean() };
        if scale > 0.0 {
            for rel in JITTER_LADDER {
                let nugget = rel * scale;
                let mut jittered = a.clone();
                for i in 0..n {
                    jittered[(i, i)] += nugget;
                }
                if let Some(chol) = Cholesky::new(jittered) {
                    return Ok(Self { chol, nugget });
                }
            }
        }
        Err(PnmolError::Factorization(format!(
            "{n}x{n} matrix is not positive definite after jitter escalation (mean diagonal {scale:e})"
        )))
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `vᵀ (A + nugget·I)⁻¹ v`.
    pub fn mahalanobis_sq(&self, v: &DVector<f64>) -> f64 {
        let l = self.chol.l();
        let w = l
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a nonzero diagonal");
        w.norm_squared()
    }

    /// `L⁻¹ B` for the lower Cholesky factor `L`.
    pub fn half_solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a nonzero diagonal")
    }
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = symmetrized(m.clone());
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// PSD check with tolerance relative to the mean diagonal:
/// `λ_min ≥ −rel_tol · trace / dim`.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let n = m.nrows();
    if n == 0 {
        return true;
    }
    let scale = (m.trace() / n as f64).abs();
    min_eigenvalue(m) >= -rel_tol * scale
}

/// Moore–Penrose pseudo-inverse with singular values below
/// `rcond · σ_max` treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = rcond * smax;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested Vᵀ");
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let vk = vt.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// `I_copies ⊗ m`.
pub fn repeat_diag(m: &DMatrix<f64>, copies: usize) -> DMatrix<f64> {
    DMatrix::<f64>::identity(copies, copies).kronecker(m)
}

/// Frobenius-norm relative difference `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}
