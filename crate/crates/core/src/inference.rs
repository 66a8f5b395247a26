//! Gaussian filtering and smoothing with unscaled covariances.
//!
//! Every covariance here is the factor `Ĉ` in `γ²·Ĉ`; the output scale is
//! estimated afterwards by [`calibrate`].

use std::borrow::Borrow;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, JitteredCholesky};
use crate::statespace::DiscreteTransition;
use crate::{PnmolError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(PnmolError::DimensionMismatch(format!(
                "mean of length {} with a {}x{} covariance",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        if self.mean.iter().chain(self.cov.iter()).any(|v| !v.is_finite()) {
            return Err(PnmolError::Numerical(format!("non-finite values after {what}")));
        }
        Ok(())
    }
}

/// Residual `H x + b` observed as zero, with unscaled noise `R̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedObservation {
    pub h: DMatrix<f64>,
    pub b: DVector<f64>,
    pub noise: DMatrix<f64>,
}

impl LinearizedObservation {
    pub fn dirac(h: DMatrix<f64>, b: DVector<f64>) -> Self {
        let m = h.nrows();
        Self { h, b, noise: DMatrix::zeros(m, m) }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// Stacks observations row-wise with block-diagonal noise.
    pub fn stack(parts: &[LinearizedObservation]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.h.ncols());
        if parts.iter().any(|p| p.h.ncols() != cols) {
            return Err(PnmolError::DimensionMismatch("observations over different states".into()));
        }
        let rows: usize = parts.iter().map(|p| p.dim()).sum();
        let mut h = DMatrix::zeros(rows, cols);
        let mut b = DVector::zeros(rows);
        let mut r = 0;
        for p in parts {
            h.view_mut((r, 0), (p.dim(), cols)).copy_from(&p.h);
            b.rows_mut(r, p.dim()).copy_from(&p.b);
            r += p.dim();
        }
        let blocks: Vec<&DMatrix<f64>> = parts.iter().map(|p| &p.noise).collect();
        Ok(Self { h, b, noise: linalg::block_diag(&blocks) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRecord {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub t: f64,
}

/// A PDE right-hand side `F(t, u, 𝓓u)` on stacked grid values.
pub trait VectorField {
    fn eval(&self, t: f64, u: &DVector<f64>, du: &DVector<f64>) -> DVector<f64>;
    /// `(∇_u F, ∇_{𝓓u} F)`.
    fn jacobians(&self, t: f64, u: &DVector<f64>, du: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>);
}

/// Positions of the blocks a residual touches within the state vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSlices {
    pub dim: usize,
    pub u: Range<usize>,
    pub udot: Range<usize>,
    pub xi: Option<Range<usize>>,
}

#[derive(Debug, Clone)]
pub struct Linearization {
    pub obs: LinearizedObservation,
    pub h_u: DMatrix<f64>,
    pub h_xi: DMatrix<f64>,
}

/// Linearizes `r = U̇ − F(t, U, D U + ξ)` at `(η_U, η_ξ)`.
pub fn linearize<F: VectorField + ?Sized>(
    field: &F,
    t: f64,
    eta_u: &DVector<f64>,
    eta_xi: Option<&DVector<f64>>,
    d: &DMatrix<f64>,
    slices: &StateSlices,
) -> Result<Linearization> {
    let q = eta_u.len();
    if d.nrows() != q || d.ncols() != q || slices.u.len() != q || slices.udot.len() != q {
        return Err(PnmolError::DimensionMismatch(format!(
            "linearization with {q} grid values, D of shape {:?}",
            d.shape()
        )));
    }
    let zero = DVector::zeros(q);
    let eta_xi = eta_xi.unwrap_or(&zero);
    let du = d * eta_u + eta_xi;
    let value = field.eval(t, eta_u, &du);
    let (j_u, j_du) = field.jacobians(t, eta_u, &du);
    if value.len() != q || j_u.shape() != (q, q) || j_du.shape() != (q, q) {
        return Err(PnmolError::DimensionMismatch("vector field output does not match the grid".into()));
    }
    let h_u = j_u + &j_du * d;
    let h_xi = j_du;
    let offset = value - &h_u * eta_u - &h_xi * eta_xi;

    let mut h = DMatrix::zeros(q, slices.dim);
    for i in 0..q {
        h[(i, slices.udot.start + i)] = 1.0;
    }
    {
        let mut hu = h.view_mut((0, slices.u.start), (q, q));
        hu -= &h_u;
    }
    if let Some(xi) = &slices.xi {
        let mut hx = h.view_mut((0, xi.start), (q, q));
        hx -= &h_xi;
    }
    Ok(Linearization { obs: LinearizedObservation::dirac(h, -offset), h_u, h_xi })
}

pub fn predict(belief: &GaussianBelief, tr: &DiscreteTransition) -> Result<GaussianBelief> {
    let n = belief.dim();
    if tr.phi.shape() != (n, n) || tr.sigma.shape() != (n, n) {
        return Err(PnmolError::DimensionMismatch(format!(
            "belief of dimension {n} with a transition of shape {:?}",
            tr.phi.shape()
        )));
    }
    let mean = &tr.phi * &belief.mean;
    let cov = linalg::symmetrized(&tr.phi * &belief.cov * tr.phi.transpose() + &tr.sigma);
    let out = GaussianBelief { mean, cov };
    out.check_finite("prediction")?;
    Ok(out)
}

/// Conditions on `H x + b = 0` under noise `R̂` (Joseph form).
///
/// Rows whose innovation variance is identically zero are already
/// determined by the belief; they carry no information and are skipped, so
/// the record only holds the informative rows.
pub fn update(belief: &GaussianBelief, obs: &LinearizedObservation, t: f64) -> Result<(GaussianBelief, ResidualRecord)> {
    let n = belief.dim();
    let m = obs.dim();
    if obs.h.ncols() != n || obs.b.len() != m || obs.noise.shape() != (m, m) {
        return Err(PnmolError::DimensionMismatch(format!(
            "observation of shape {:?} for a state of dimension {n}",
            obs.h.shape()
        )));
    }
    let ch_full = &belief.cov * obs.h.transpose();
    let s_full = linalg::symmetrized(&obs.h * &ch_full + &obs.noise);
    let keep: Vec<usize> = (0..m).filter(|&i| s_full.row(i).iter().any(|v| *v != 0.0)).collect();
    let residual = (&obs.h * &belief.mean + &obs.b).select_rows(&keep);
    if keep.is_empty() {
        let record = ResidualRecord { mean: residual, cov: DMatrix::zeros(0, 0), t };
        return Ok((belief.clone(), record));
    }
    let h = obs.h.select_rows(&keep);
    let ch = ch_full.select_columns(&keep);
    let s = s_full.select_rows(&keep).select_columns(&keep);
    let chol = JitteredCholesky::factor(&s)?;
    let gain = chol.solve(&ch.transpose()).transpose();
    let mean = &belief.mean - &gain * &residual;
    let a = DMatrix::<f64>::identity(n, n) - &gain * &h;
    let mut noise = obs.noise.select_rows(&keep).select_columns(&keep);
    for i in 0..keep.len() {
        noise[(i, i)] += chol.nugget();
    }
    let cov = linalg::symmetrized(&a * &belief.cov * a.transpose() + &gain * noise * gain.transpose());
    let out = GaussianBelief { mean, cov };
    out.check_finite("update")?;
    Ok((out, ResidualRecord { mean: residual, cov: s, t }))
}

/// Fixed-interval Rauch–Tung–Striebel smoothing; `transitions[k]` maps time
/// `k` to `k + 1`.
pub fn smooth<T: Borrow<DiscreteTransition>>(
    filtered: &[GaussianBelief],
    transitions: &[T],
) -> Result<Vec<GaussianBelief>> {
    let mut out = filtered.to_vec();
    smooth_in_place(&mut out, transitions)?;
    Ok(out)
}

/// As [`smooth`], overwriting the filtered beliefs.
///
/// Components with identically zero predicted variance are deterministic and
/// get zero smoother gain; the remaining block is factorized on its own so
/// that jitter never leaks into it.
pub fn smooth_in_place<T: Borrow<DiscreteTransition>>(
    beliefs: &mut [GaussianBelief],
    transitions: &[T],
) -> Result<()> {
    if beliefs.is_empty() {
        return Ok(());
    }
    if transitions.len() + 1 != beliefs.len() {
        return Err(PnmolError::DimensionMismatch(format!(
            "{} beliefs need {} transitions, got {}",
            beliefs.len(),
            beliefs.len() - 1,
            transitions.len()
        )));
    }
    for k in (0..transitions.len()).rev() {
        let tr = transitions[k].borrow();
        let (head, tail) = beliefs.split_at_mut(k + 1);
        let f = &head[k];
        let next = &tail[0];
        let pred = predict(f, tr)?;
        let live: Vec<usize> = (0..pred.dim()).filter(|&i| pred.cov.row(i).iter().any(|v| *v != 0.0)).collect();
        let p_live = pred.cov.select_rows(&live).select_columns(&live);
        let cross = (&f.cov * tr.phi.transpose()).select_columns(&live);
        let gain = if live.is_empty() {
            DMatrix::zeros(f.dim(), 0)
        } else {
            JitteredCholesky::factor(&p_live)?.solve(&cross.transpose()).transpose()
        };
        let dm = (&next.mean - &pred.mean).select_rows(&live);
        let dc = (&next.cov - &pred.cov).select_rows(&live).select_columns(&live);
        let mean = &f.mean + &gain * dm;
        let cov = linalg::symmetrized(&f.cov + &gain * dc * gain.transpose());
        let s = GaussianBelief { mean, cov };
        s.check_finite("smoothing")?;
        head[k] = s;
    }
    Ok(())
}

/// Quasi-maximum-likelihood output scale: the summed Mahalanobis norms of
/// the residual means divided by the total residual dimension.
pub fn calibrate(records: &[ResidualRecord]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in records {
        if r.mean.is_empty() {
            continue;
        }
        let chol = JitteredCholesky::factor(&r.cov)?;
        total += chol.mahalanobis_sq(&r.mean);
        count += r.mean.len();
    }
    if count == 0 {
        return Err(PnmolError::InvalidArgument("no residuals to calibrate on".into()));
    }
    let g = total / count as f64;
    if !g.is_finite() {
        return Err(PnmolError::Numerical(format!("calibrated scale is {g}")));
    }
    Ok(g)
}
