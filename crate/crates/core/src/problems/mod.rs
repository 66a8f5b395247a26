//! Benchmark PDEs on `[0, 1]` and classical reference solutions.
//!
//! Every problem has the form `∂u/∂t = f(u) + diag(κ) Δu` with `L` coupled
//! fields stacked field-major on the grid.

mod reference;

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::discretize::{BoundaryKind, Grid};
use crate::inference::VectorField;
use crate::kernels::DiffOperator;
use crate::{PnmolError, Result};

pub use reference::{reference_solve, ReferenceSolution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialProfile {
    /// `offset + amplitude · exp(−(x − center)² / width)`.
    GaussianBump { center: f64, width: f64, amplitude: f64, offset: f64 },
    /// `offset + amplitude · cos(πx)`.
    Cosine { offset: f64, amplitude: f64 },
    /// `amplitude · sin(πx)`.
    Sine { amplitude: f64 },
    Constant(f64),
}

impl InitialProfile {
    pub fn eval(&self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Self::GaussianBump { center, width, amplitude, offset } => {
                offset + amplitude * (-(x - center).powi(2) / width).exp()
            }
            Self::Cosine { offset, amplitude } => offset + amplitude * (PI * x).cos(),
            Self::Sine { amplitude } => amplitude * (PI * x).sin(),
            Self::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Heat { alpha: f64 },
    LotkaVolterra { a: f64, b: f64, c: f64, e: f64, delta_u: f64, delta_v: f64 },
    Sir { beta: f64, gamma_r: f64, delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem {
    pub name: String,
    pub model: Model,
    pub initial: Vec<InitialProfile>,
    pub boundary: BoundaryKind,
    pub t0: f64,
    pub t_max: f64,
}

impl fmt::Display for PdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({:?}, {:?} boundary, t in [{}, {}])", self.name, self.model, self.boundary, self.t0, self.t_max)
    }
}

pub const PROBLEM_NAMES: [&str; 3] = ["heat", "lotka-volterra", "sir"];

pub fn heat_1d() -> PdeProblem {
    PdeProblem {
        name: "heat".into(),
        model: Model::Heat { alpha: 0.1 },
        initial: vec![InitialProfile::GaussianBump { center: 0.5, width: 0.01, amplitude: 1.0, offset: 0.0 }],
        boundary: BoundaryKind::Dirichlet,
        t0: 0.0,
        t_max: 1.0,
    }
}

pub fn lotka_volterra_spatial() -> PdeProblem {
    PdeProblem {
        name: "lotka-volterra".into(),
        model: Model::LotkaVolterra { a: 1.0, b: 1.0, c: 1.0, e: 1.0, delta_u: 0.1, delta_v: 0.1 },
        initial: vec![
            InitialProfile::Cosine { offset: 1.0, amplitude: 0.5 },
            InitialProfile::Cosine { offset: 1.0, amplitude: -0.5 },
        ],
        boundary: BoundaryKind::Neumann,
        t0: 0.0,
        t_max: 1.0,
    }
}

pub fn sir_spatial() -> PdeProblem {
    PdeProblem {
        name: "sir".into(),
        model: Model::Sir { beta: 3.0, gamma_r: 1.0, delta: 0.05 },
        initial: vec![
            InitialProfile::Cosine { offset: 0.95, amplitude: -0.05 },
            InitialProfile::Cosine { offset: 0.05, amplitude: 0.05 },
            InitialProfile::Constant(0.0),
        ],
        boundary: BoundaryKind::Neumann,
        t0: 0.0,
        t_max: 1.0,
    }
}

pub fn by_name(name: &str) -> Result<PdeProblem> {
    match name {
        "heat" => Ok(heat_1d()),
        "lotka-volterra" | "lv" => Ok(lotka_volterra_spatial()),
        "sir" => Ok(sir_spatial()),
        other => Err(PnmolError::InvalidArgument(format!(
            "unknown problem '{other}', expected one of {}",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| PnmolError::InvalidArgument(format!("{key}: expected a number, got '{value}'")))
}

impl PdeProblem {
    pub fn fields(&self) -> usize {
        match self.model {
            Model::Heat { .. } => 1,
            Model::LotkaVolterra { .. } => 2,
            Model::Sir { .. } => 3,
        }
    }

    pub fn operator(&self) -> DiffOperator {
        DiffOperator::Laplacian
    }

    /// Diffusion coefficient of each field.
    pub fn diffusion(&self) -> Vec<f64> {
        match self.model {
            Model::Heat { alpha } => vec![alpha],
            Model::LotkaVolterra { delta_u, delta_v, .. } => vec![delta_u, delta_v],
            Model::Sir { delta, .. } => vec![delta; 3],
        }
    }

    /// Overrides one parameter from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "t_max" => {
                self.t_max = parse_f64(key, value)?;
                if self.t_max <= self.t0 {
                    return Err(PnmolError::InvalidArgument("t_max must exceed t0".into()));
                }
                return Ok(());
            }
            "boundary" => {
                self.boundary = match value.trim() {
                    "dirichlet" => BoundaryKind::Dirichlet,
                    "neumann" => BoundaryKind::Neumann,
                    other => {
                        return Err(PnmolError::InvalidArgument(format!("boundary: unknown kind '{other}'")))
                    }
                };
                return Ok(());
            }
            _ => {}
        }
        let unknown = || PnmolError::InvalidArgument(format!("unknown parameter '{key}' for problem {}", self.name));
        match &mut self.model {
            Model::Heat { alpha } => match key {
                "alpha" => *alpha = parse_f64(key, value)?,
                "initial" => {
                    self.initial = vec![match value.trim() {
                        "bump" => heat_1d().initial[0],
                        "sine" => InitialProfile::Sine { amplitude: 1.0 },
                        "zero" => InitialProfile::Constant(0.0),
                        other => {
                            return Err(PnmolError::InvalidArgument(format!("initial: unknown profile '{other}'")))
                        }
                    }]
                }
                _ => return Err(unknown()),
            },
            Model::LotkaVolterra { a, b, c, e, delta_u, delta_v } => {
                let slot = match key {
                    "a" => a,
                    "b" => b,
                    "c" => c,
                    "e" => e,
                    "delta_u" => delta_u,
                    "delta_v" => delta_v,
                    _ => return Err(unknown()),
                };
                *slot = parse_f64(key, value)?;
            }
            Model::Sir { beta, gamma_r, delta } => {
                let slot = match key {
                    "beta" => beta,
                    "gamma_r" => gamma_r,
                    "delta" => delta,
                    _ => return Err(unknown()),
                };
                *slot = parse_f64(key, value)?;
            }
        }
        if self.diffusion().iter().any(|&k| k < 0.0) {
            return Err(PnmolError::InvalidArgument("diffusion coefficients must be non-negative".into()));
        }
        Ok(())
    }

    /// `h(𝕏)` stacked field-major.
    pub fn initial_values(&self, grid: &Grid) -> Result<DVector<f64>> {
        if grid.dim() != 1 {
            return Err(PnmolError::Unsupported("benchmark problems are one-dimensional".into()));
        }
        Ok(self.initial_at(&grid.points().iter().map(|p| p[0]).collect::<Vec<_>>()))
    }

    pub(crate) fn initial_at(&self, xs: &[f64]) -> DVector<f64> {
        let q = xs.len();
        DVector::from_fn(self.fields() * q, |i, _| self.initial[i / q].eval(xs[i % q]))
    }

    /// Boundary data `g(𝕏_B)` stacked field-major; zero for all problems.
    pub fn boundary_values(&self, grid: &Grid) -> DVector<f64> {
        DVector::zeros(self.fields() * grid.boundary_indices().len())
    }

    /// Pointwise reaction term `f(u)` and its Jacobian at one grid point.
    pub(crate) fn reaction(&self, u: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        match self.model {
            Model::Heat { .. } => (vec![0.0], vec![vec![0.0]]),
            Model::LotkaVolterra { a, b, c, e, .. } => {
                let (p, q) = (u[0], u[1]);
                (
                    vec![a * p - b * p * q, -c * q + e * p * q],
                    vec![vec![a - b * q, -b * p], vec![e * q, -c + e * p]],
                )
            }
            Model::Sir { beta, gamma_r, .. } => {
                let (s, i) = (u[0], u[1]);
                (
                    vec![-beta * s * i, beta * s * i - gamma_r * i, gamma_r * i],
                    vec![
                        vec![-beta * i, -beta * s, 0.0],
                        vec![beta * i, beta * s - gamma_r, 0.0],
                        vec![0.0, gamma_r, 0.0],
                    ],
                )
            }
        }
    }

    fn grid_values(&self, u: &DVector<f64>) -> usize {
        let l = self.fields();
        assert!(u.len().is_multiple_of(l), "state length {} is not a multiple of {l} fields", u.len());
        u.len() / l
    }
}

impl VectorField for PdeProblem {
    fn eval(&self, _t: f64, u: &DVector<f64>, du: &DVector<f64>) -> DVector<f64> {
        let q = self.grid_values(u);
        let l = self.fields();
        let kappa = self.diffusion();
        let mut out = DVector::zeros(l * q);
        let mut local = vec![0.0; l];
        for n in 0..q {
            for f in 0..l {
                local[f] = u[f * q + n];
            }
            let (r, _) = self.reaction(&local);
            for f in 0..l {
                out[f * q + n] = r[f] + kappa[f] * du[f * q + n];
            }
        }
        out
    }

    fn jacobians(&self, _t: f64, u: &DVector<f64>, _du: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let q = self.grid_values(u);
        let l = self.fields();
        let kappa = self.diffusion();
        let mut ju = DMatrix::zeros(l * q, l * q);
        let mut jd = DMatrix::zeros(l * q, l * q);
        let mut local = vec![0.0; l];
        for n in 0..q {
            for f in 0..l {
                local[f] = u[f * q + n];
            }
            let (_, jac) = self.reaction(&local);
            for f in 0..l {
                for g in 0..l {
                    ju[(f * q + n, g * q + n)] = jac[f][g];
                }
                jd[(f * q + n, f * q + n)] = kappa[f];
            }
        }
        (ju, jd)
    }
}
