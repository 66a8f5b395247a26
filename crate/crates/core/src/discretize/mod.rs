//! Differentiation matrices with quantified discretization error.
//!
//! For a linear operator `𝓓` the kernel-based approximation
//! `𝓓u(𝕏) ≈ D u(𝕏)` comes with an error covariance `E`, global (dense) or
//! localized onto nearest-neighbour stencils (banded `D`, diagonal `E`).

mod grid;
mod stencil;

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::exec::Execution;
use crate::kernels::{DiffOperator, Kernel, KernelFamily, Point};
use crate::linalg::{self, JitteredCholesky};
use crate::{PnmolError, Result};

pub use grid::Grid;
pub use stencil::{select_stencil, Stencil, StencilFinder};

/// Pseudo-inverse cutoff for polynomial-kernel Grams, relative to the largest
/// singular value.
pub const POLYNOMIAL_RCOND: f64 = 1e-10;

/// Relative tolerance below which a negative local error variance counts as
/// round-off and is clamped to zero.
pub const CLAMP_RTOL: f64 = 1e-8;

pub const DEFAULT_RADIUS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxKind {
    Global,
    Localized { radius: usize },
}

#[derive(Debug, Clone)]
pub struct OperatorApprox {
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub grid: Grid,
    pub kind: ApproxKind,
}

/// Boundary operator discretized on the boundary rows only:
/// `𝓑u(𝕏_B) ≈ B u(𝕏)` with error covariance `R`.
#[derive(Debug, Clone)]
pub struct BoundaryApprox {
    pub indices: Vec<usize>,
    pub b: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    /// Derivative along the outward normal.
    Neumann,
}

/// Inverse of a kernel Gram matrix, applied to right-hand sides.
enum GramSolver {
    Cholesky(JitteredCholesky),
    Pseudo(DMatrix<f64>),
}

impl GramSolver {
    fn new(kernel: &Kernel, gram: &DMatrix<f64>) -> Result<Self> {
        match kernel.family {
            KernelFamily::Polynomial { .. } => {
                Ok(Self::Pseudo(linalg::pseudo_inverse(gram, POLYNOMIAL_RCOND)))
            }
            KernelFamily::SquaredExponential { .. } => {
                Ok(Self::Cholesky(JitteredCholesky::factor(gram)?))
            }
        }
    }

    /// Returns `(W, Q)` for cross-covariance rows `C` (one row per output):
    /// `W = C K⁻¹` and `Q = C K⁻¹ Cᵀ`.
    fn weights_and_quadratic(&self, cross: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        match self {
            Self::Cholesky(chol) => {
                let w = chol.solve(&cross.transpose()).transpose();
                let y = chol.half_solve(&cross.transpose());
                (w, y.transpose() * y)
            }
            Self::Pseudo(pinv) => {
                let w = cross * pinv;
                let q = &w * cross.transpose();
                (w, q)
            }
        }
    }
}

fn check_supported(kernel: &Kernel, op: &DiffOperator, grid: &Grid) -> Result<()> {
    if grid.is_empty() {
        return Err(PnmolError::InvalidArgument("grid is empty".into()));
    }
    if grid.dim() != kernel.dim {
        return Err(PnmolError::DimensionMismatch(format!(
            "grid of dimension {} for a {}-dimensional kernel",
            grid.dim(),
            kernel.dim
        )));
    }
    kernel.apply_both(op).map(|_| ())
}

/// Global collocation: `D = (𝓓k)(X, X) K⁻¹` and
/// `E = (𝓓𝓓*k)(X, X) − D K Dᵀ`.
pub fn collocate_global(kernel: &Kernel, op: &DiffOperator, grid: &Grid) -> Result<OperatorApprox> {
    check_supported(kernel, op, grid)?;
    let n = grid.len();
    // K K⁻¹ is the identity exactly; solving would only add round-off.
    if *op == DiffOperator::Identity {
        return Ok(OperatorApprox {
            d: DMatrix::identity(n, n),
            e: DMatrix::zeros(n, n),
            grid: grid.clone(),
            kind: ApproxKind::Global,
        });
    }
    let x = grid.points();
    let gram = kernel.gram(x, x)?;
    let solver = GramSolver::new(kernel, &gram)?;
    let cross = kernel.apply_left(op)?.gram(x, x)?;
    let prior = kernel.apply_both(op)?.gram(x, x)?;
    let (d, q) = solver.weights_and_quadratic(&cross);
    let e = linalg::symmetrized(prior - q);
    Ok(OperatorApprox { d, e, grid: grid.clone(), kind: ApproxKind::Global })
}

/// One localized row: weights on the stencil and the error variance.
struct LocalRow {
    columns: Vec<usize>,
    weights: Vec<f64>,
    variance: f64,
}

fn local_row(
    kernel: &Kernel,
    left: &DiffOperator,
    right: &DiffOperator,
    points: &[Point],
    n: usize,
    stencil: &Stencil,
) -> Result<LocalRow> {
    let local: Vec<Point> = stencil.neighbor_indices.iter().map(|&i| points[i].clone()).collect();
    let center = std::slice::from_ref(&points[n]);
    let gram = kernel.gram(&local, &local)?;
    let solver = GramSolver::new(kernel, &gram)?;
    let cross = kernel.apply_left(left)?.gram(center, &local)?;
    let prior = kernel.apply_pair(left, right)?.eval(&points[n], &points[n])?;
    let (w, q) = solver.weights_and_quadratic(&cross);
    let raw = prior - q[(0, 0)];
    let tol = CLAMP_RTOL * prior.abs().max(f64::MIN_POSITIVE);
    let variance = if raw >= 0.0 {
        raw
    } else if raw >= -tol {
        0.0
    } else {
        return Err(PnmolError::NegativeVariance { index: n, value: raw });
    };
    Ok(LocalRow { columns: stencil.neighbor_indices.clone(), weights: w.row(0).iter().copied().collect(), variance })
}

/// Localized collocation on `2k+1`-point stencils with default execution.
pub fn collocate_local(kernel: &Kernel, op: &DiffOperator, grid: &Grid, radius: usize) -> Result<OperatorApprox> {
    collocate_local_with(Execution::default(), kernel, op, grid, radius)
}

pub fn collocate_local_with(
    exec: Execution,
    kernel: &Kernel,
    op: &DiffOperator,
    grid: &Grid,
    radius: usize,
) -> Result<OperatorApprox> {
    check_supported(kernel, op, grid)?;
    let n = grid.len();
    let finder = StencilFinder::new(grid);
    let rows = exec.map(n, |i| {
        let stencil = finder.select(i, radius)?;
        if *op == DiffOperator::Identity {
            return Ok(LocalRow { columns: vec![i], weights: vec![1.0], variance: 0.0 });
        }
        local_row(kernel, op, op, grid.points(), i, &stencil)
    });
    let mut d = DMatrix::zeros(n, n);
    let mut e = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        for (&c, &w) in row.columns.iter().zip(&row.weights) {
            d[(i, c)] = w;
        }
        e[(i, i)] = row.variance;
    }
    Ok(OperatorApprox { d, e, grid: grid.clone(), kind: ApproxKind::Localized { radius } })
}

/// Global collocation of a boundary operator applied uniformly to all rows.
/// The solver restricts the result to boundary rows.
pub fn collocate_boundary(kernel: &Kernel, bop: &DiffOperator, grid: &Grid) -> Result<OperatorApprox> {
    match bop {
        DiffOperator::Identity | DiffOperator::DirectionalDerivative(_) => collocate_global(kernel, bop, grid),
        DiffOperator::Laplacian => {
            Err(PnmolError::Unsupported("boundary operators are Dirichlet or directional derivatives".into()))
        }
    }
}

/// Boundary discretization on the grid's boundary points, using each point's
/// outward normal for Neumann conditions. `radius = None` conditions on the
/// whole grid; otherwise each boundary row uses its own stencil and `R` is
/// diagonal.
pub fn discretize_boundary(
    kernel: &Kernel,
    kind: BoundaryKind,
    grid: &Grid,
    radius: Option<usize>,
) -> Result<BoundaryApprox> {
    let indices = grid.boundary_indices();
    let nb = indices.len();
    let n = grid.len();
    if kind == BoundaryKind::Dirichlet {
        let mut b = DMatrix::zeros(nb, n);
        for (r, &i) in indices.iter().enumerate() {
            b[(r, i)] = 1.0;
        }
        return Ok(BoundaryApprox { indices, b, r: DMatrix::zeros(nb, nb) });
    }
    let ops: Vec<DiffOperator> = indices
        .iter()
        .map(|&i| grid.outward_normal(i).and_then(DiffOperator::directional))
        .collect::<Result<_>>()?;
    check_supported(kernel, &ops.first().cloned().unwrap_or(DiffOperator::Identity), grid)?;
    let points = grid.points();
    match radius {
        Some(radius) => {
            let finder = StencilFinder::new(grid);
            let mut b = DMatrix::zeros(nb, n);
            let mut r = DMatrix::zeros(nb, nb);
            for (row, (&i, op)) in indices.iter().zip(&ops).enumerate() {
                let stencil = finder.select(i, radius)?;
                let local = local_row(kernel, op, op, points, i, &stencil)?;
                for (&c, &w) in local.columns.iter().zip(&local.weights) {
                    b[(row, c)] = w;
                }
                r[(row, row)] = local.variance;
            }
            Ok(BoundaryApprox { indices, b, r })
        }
        None => {
            let gram = kernel.gram(points, points)?;
            let solver = GramSolver::new(kernel, &gram)?;
            let mut cross = DMatrix::zeros(nb, n);
            let mut prior = DMatrix::zeros(nb, nb);
            for (a, (&i, op_i)) in indices.iter().zip(&ops).enumerate() {
                for (c, p) in points.iter().enumerate() {
                    cross[(a, c)] = kernel.eval_pair(op_i, &DiffOperator::Identity, &points[i], p)?;
                }
                for (bb, (&j, op_j)) in indices.iter().zip(&ops).enumerate() {
                    prior[(a, bb)] = kernel.eval_pair(op_i, op_j, &points[i], &points[j])?;
                }
            }
            let (b, q) = solver.weights_and_quadratic(&cross);
            Ok(BoundaryApprox { indices, b, r: linalg::symmetrized(prior - q) })
        }
    }
}

impl OperatorApprox {
    /// Applies `D` to grid values.
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.d * u
    }

    /// Largest number of nonzeros in any row of `D`.
    pub fn max_row_nonzeros(&self) -> usize {
        self.d.row_iter().map(|r| r.iter().filter(|v| **v != 0.0).count()).max().unwrap_or(0)
    }

    /// Writes nonzero entries of `D` and `E` as `row,col,value,matrix` records.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "value", "matrix"])?;
        for (name, m) in [("D", &self.d), ("E", &self.e)] {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    let v = m[(i, j)];
                    if v != 0.0 {
                        w.write_record([i.to_string(), j.to_string(), crate::bench::format_float(v), name.to_string()])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}
