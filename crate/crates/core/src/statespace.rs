//! Integrated Wiener process priors and their discretization.

use nalgebra::{DMatrix, DVector};

use crate::inference::GaussianBelief;
use crate::linalg;
use crate::{PnmolError, Result};

/// Linear time-invariant SDE `dυ = A υ dt + B dw` with initial law `N(m0, C0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSde {
    pub drift: DMatrix<f64>,
    pub dispersion: DVector<f64>,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
    pub nu: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTransition {
    pub phi: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub h: f64,
}

/// `ν`-times integrated Wiener process.
pub fn iwp_sde(nu: usize) -> LtiSde {
    let q = nu + 1;
    let mut drift = DMatrix::zeros(q, q);
    for i in 0..nu {
        drift[(i, i + 1)] = 1.0;
    }
    let mut dispersion = DVector::zeros(q);
    dispersion[nu] = 1.0;
    LtiSde { drift, dispersion, init_mean: DVector::zeros(q), init_cov: DMatrix::identity(q, q), nu }
}

/// `Φ̆ = exp(A h)` and `Σ̆ = ∫₀ʰ Φ̆(h−τ) B Bᵀ Φ̆(h−τ)ᵀ dτ` from the block
/// exponential `exp([[A, BBᵀ], [0, −Aᵀ]] h)`.
pub fn discretize_sde(sde: &LtiSde, h: f64) -> Result<DiscreteTransition> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(PnmolError::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let q = sde.drift.nrows();
    let mut block = DMatrix::zeros(2 * q, 2 * q);
    block.view_mut((0, 0), (q, q)).copy_from(&(&sde.drift * h));
    block
        .view_mut((0, q), (q, q))
        .copy_from(&(&sde.dispersion * sde.dispersion.transpose() * h));
    block.view_mut((q, q), (q, q)).copy_from(&(-sde.drift.transpose() * h));
    let ex = block.exp();
    let phi = ex.view((0, 0), (q, q)).into_owned();
    let sigma = linalg::symmetrized(ex.view((0, q), (q, q)) * phi.transpose());
    Ok(DiscreteTransition { phi, sigma, h })
}

/// `Φ = Φ̆ ⊗ I_q`, `Σ = Σ̆ ⊗ M`.
pub fn kron_lift(phi: &DMatrix<f64>, sigma: &DMatrix<f64>, m: &DMatrix<f64>, h: f64) -> DiscreteTransition {
    let q = m.nrows();
    DiscreteTransition {
        phi: phi.kronecker(&DMatrix::<f64>::identity(q, q)),
        sigma: sigma.kronecker(m),
        h,
    }
}

/// `N(m0 ⊗ 1, C0 ⊗ M)`.
pub fn lift_initial(sde: &LtiSde, m: &DMatrix<f64>) -> GaussianBelief {
    let q = m.nrows();
    GaussianBelief {
        mean: sde.init_mean.kronecker(&DVector::from_element(q, 1.0)),
        cov: sde.init_cov.kronecker(m),
    }
}
