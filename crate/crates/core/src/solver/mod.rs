//! Probabilistic method-of-lines solvers.
//!
//! Three variants share one filtering loop:
//!
//! - [`Variant::Latent`] carries the discretization error `ξ` (and the
//!   boundary error `ϑ`) as integrated Wiener processes in the state.
//! - [`Variant::White`] treats both as white measurement noise, halving the
//!   state.
//! - [`Variant::Mol`] is the classical method of lines with a probabilistic
//!   ODE filter: interior unknowns only, boundary values eliminated and the
//!   discretization error ignored.

mod layout;
mod model;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::discretize::Grid;
use crate::kernels::{Kernel, DEFAULT_INPUT_SCALE};
use crate::problems::PdeProblem;
use crate::{PnmolError, Result};

pub use layout::StateLayout;
pub use model::{Embedding, SolverModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Latent,
    White,
    Mol,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Latent, Variant::White, Variant::Mol];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Latent => "latent",
            Self::White => "white",
            Self::Mol => "mol",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = PnmolError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "latent" => Ok(Self::Latent),
            "white" => Ok(Self::White),
            "mol" | "mol_baseline" => Ok(Self::Mol),
            other => Err(PnmolError::InvalidArgument(format!("unknown variant '{other}' (latent, white, mol)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilChoice {
    Global,
    Local(usize),
}

/// Spatial covariance of the `U` prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialPrior {
    /// Independent grid values.
    Identity,
    /// The spatial kernel's Gram matrix on the grid.
    Kernel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    pub kernel: Kernel,
    pub nu: usize,
    pub stencil: StencilChoice,
    pub dx: f64,
    pub dt: f64,
    pub calibrate: bool,
    pub spatial_prior: SpatialPrior,
    /// Constant multiplying every prior covariance.
    pub prior_scale: f64,
    /// Constant multiplying the discretization error covariances `E` and `R`.
    pub error_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Latent,
            kernel: Kernel::squared_exponential(DEFAULT_INPUT_SCALE, 1).expect("valid default kernel"),
            nu: 1,
            stencil: StencilChoice::Local(crate::discretize::DEFAULT_RADIUS),
            dx: 0.2,
            dt: 0.01,
            calibrate: true,
            spatial_prior: SpatialPrior::Identity,
            prior_scale: 1.0,
            error_scale: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(PnmolError::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(1..=2).contains(&self.nu) {
            return Err(PnmolError::Unsupported(format!("nu must be 1 or 2, got {}", self.nu)));
        }
        if !(self.dx > 0.0 && (1.0 / self.dx).round() >= 2.0) {
            return Err(PnmolError::InvalidArgument(format!("dx = {} must give at least 3 grid points", self.dx)));
        }
        if self.kernel.dim != 1 {
            return Err(PnmolError::DimensionMismatch("the benchmark problems need a 1-D kernel".into()));
        }
        for (name, v) in [("prior_scale", self.prior_scale), ("error_scale", self.error_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PnmolError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Time grid with step `dt` from `t0` to `t_max`; a final partial step is
/// merged into the last full step.
pub fn time_grid(t0: f64, t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if t_max <= t0 || dt <= 0.0 || t_max.is_nan() || t0.is_nan() || dt.is_nan() {
        return Err(PnmolError::InvalidArgument(format!("invalid time span [{t0}, {t_max}] with dt = {dt}")));
    }
    let span = t_max - t0;
    let steps = ((span / dt) * (1.0 + 1e-12)).floor().max(1.0) as usize;
    let mut times: Vec<f64> = (0..steps).map(|k| t0 + k as f64 * dt).collect();
    times.push(t_max);
    Ok(times)
}

/// Smoothed posterior over the state at every grid time.
#[derive(Debug, Clone)]
pub struct SolutionPosterior {
    pub variant: Variant,
    pub time_grid: Vec<f64>,
    pub grid: Grid,
    pub fields: usize,
    pub means: Vec<DVector<f64>>,
    pub covs_unscaled: Vec<DMatrix<f64>>,
    pub gamma_sq: f64,
    pub layout: StateLayout,
    /// Maps the state's `U` block to all grid values (classical MOL only).
    pub embedding: Option<Embedding>,
}

impl SolutionPosterior {
    pub fn len(&self) -> usize {
        self.time_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_grid.is_empty()
    }

    /// Mean of `u` on the full grid, field-major.
    pub fn u_mean(&self, k: usize) -> DVector<f64> {
        let u = self.means[k].rows_range(self.layout.u(0)).into_owned();
        match &self.embedding {
            Some(e) => &e.p * u + &e.c,
            None => u,
        }
    }

    /// Unscaled covariance of `u` on the full grid.
    pub fn u_cov_unscaled(&self, k: usize) -> DMatrix<f64> {
        let r = self.layout.u(0);
        let c = self.covs_unscaled[k].view((r.start, r.start), (r.len(), r.len())).into_owned();
        match &self.embedding {
            Some(e) => &e.p * c * e.p.transpose(),
            None => c,
        }
    }

    /// Calibrated marginal standard deviations of `u`.
    pub fn u_std(&self, k: usize) -> DVector<f64> {
        let c = self.u_cov_unscaled(k);
        DVector::from_fn(c.nrows(), |i, _| (self.gamma_sq * c[(i, i)].max(0.0)).sqrt())
    }
}

pub fn solve(problem: &PdeProblem, cfg: &SolverConfig) -> Result<SolutionPosterior> {
    SolverModel::new(problem, cfg)?.solve()
}

fn solve_as(problem: &PdeProblem, cfg: &SolverConfig, variant: Variant) -> Result<SolutionPosterior> {
    if cfg.variant != variant {
        return Err(PnmolError::InvalidArgument(format!(
            "configuration selects the {} variant, expected {variant}",
            cfg.variant
        )));
    }
    solve(problem, cfg)
}

pub fn solve_latent(problem: &PdeProblem, cfg: &SolverConfig) -> Result<SolutionPosterior> {
    solve_as(problem, cfg, Variant::Latent)
}

pub fn solve_white(problem: &PdeProblem, cfg: &SolverConfig) -> Result<SolutionPosterior> {
    solve_as(problem, cfg, Variant::White)
}

pub fn solve_mol_baseline(problem: &PdeProblem, cfg: &SolverConfig) -> Result<SolutionPosterior> {
    solve_as(problem, cfg, Variant::Mol)
}
