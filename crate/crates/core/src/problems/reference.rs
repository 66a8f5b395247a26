//! Classical method-of-lines reference solutions on refined meshes.

use nalgebra::DVector;

use super::PdeProblem;
use crate::discretize::{BoundaryKind, Grid};
use crate::{PnmolError, Result};

/// Largest `h·‖J‖∞` kept by the classical fourth-order Runge–Kutta method;
/// its real stability interval ends near 2.78.
const RK4_STABILITY: f64 = 2.5;
const MAX_STEP: f64 = 1e-3;
/// Growth of the sup-norm beyond this factor counts as numerical blow-up.
const BLOWUP_FACTOR: f64 = 1e6;

/// Reference trajectory on a fine 1-D mesh with linear interpolation in
/// space and time.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub provenance: String,
    t0: f64,
    dt: f64,
    xs: Vec<f64>,
    fields: usize,
    snapshots: Vec<DVector<f64>>,
}

impl ReferenceSolution {
    pub fn t_end(&self) -> f64 {
        self.t0 + self.dt * (self.snapshots.len() - 1) as f64
    }

    /// Values at time `t` and positions `points`, stacked field-major.
    pub fn evaluate(&self, t: f64, points: &[f64]) -> Result<DVector<f64>> {
        let tol = 1e-9 * (1.0 + self.t_end().abs());
        if t < self.t0 - tol || t > self.t_end() + tol {
            return Err(PnmolError::InvalidArgument(format!(
                "reference defined on [{}, {}], queried at {t}",
                self.t0,
                self.t_end()
            )));
        }
        let steps = self.snapshots.len() - 1;
        let s = ((t - self.t0) / self.dt).clamp(0.0, steps as f64);
        let k = (s.floor() as usize).min(steps.saturating_sub(1));
        let wt = if steps == 0 { 0.0 } else { s - k as f64 };
        let nf = self.xs.len();
        let h = self.xs[1] - self.xs[0];
        let q = points.len();
        let mut out = DVector::zeros(self.fields * q);
        for (i, &x) in points.iter().enumerate() {
            if x < self.xs[0] - 1e-12 || x > self.xs[nf - 1] + 1e-12 {
                return Err(PnmolError::InvalidArgument(format!("reference queried outside the domain at x = {x}")));
            }
            let r = ((x - self.xs[0]) / h).clamp(0.0, (nf - 1) as f64);
            let j = (r.floor() as usize).min(nf - 2);
            let wx = r - j as f64;
            for f in 0..self.fields {
                let at = |snap: &DVector<f64>| (1.0 - wx) * snap[f * nf + j] + wx * snap[f * nf + j + 1];
                let a = at(&self.snapshots[k]);
                let b = if steps == 0 { a } else { at(&self.snapshots[k + 1]) };
                out[f * q + i] = (1.0 - wt) * a + wt * b;
            }
        }
        Ok(out)
    }

    pub fn evaluate_grid(&self, t: f64, grid: &Grid) -> Result<DVector<f64>> {
        let xs: Vec<f64> = grid.points().iter().map(|p| p[0]).collect();
        self.evaluate(t, &xs)
    }
}

struct FineModel<'a> {
    problem: &'a PdeProblem,
    nf: usize,
    h: f64,
    kappa: Vec<f64>,
}

impl FineModel<'_> {
    fn rhs(&self, u: &DVector<f64>) -> DVector<f64> {
        let (nf, l) = (self.nf, self.problem.fields());
        let inv_h2 = 1.0 / (self.h * self.h);
        let mut out = DVector::zeros(l * nf);
        let mut local = vec![0.0; l];
        for n in 0..nf {
            for f in 0..l {
                local[f] = u[f * nf + n];
            }
            let (react, _) = self.problem.reaction(&local);
            let boundary = n == 0 || n == nf - 1;
            if boundary && self.problem.boundary == BoundaryKind::Dirichlet {
                continue;
            }
            for f in 0..l {
                let c = u[f * nf + n];
                // zero-flux ghost points mirror the first interior neighbour
                let left = if n == 0 { u[f * nf + 1] } else { u[f * nf + n - 1] };
                let right = if n == nf - 1 { u[f * nf + nf - 2] } else { u[f * nf + n + 1] };
                out[f * nf + n] = react[f] + self.kappa[f] * (left - 2.0 * c + right) * inv_h2;
            }
        }
        out
    }

    fn jacobian_inf_norm(&self, u: &DVector<f64>) -> f64 {
        let (nf, l) = (self.nf, self.problem.fields());
        let mut best: f64 = 0.0;
        let mut local = vec![0.0; l];
        for n in 0..nf {
            for f in 0..l {
                local[f] = u[f * nf + n];
            }
            let (_, jac) = self.problem.reaction(&local);
            for (row, kappa) in jac.iter().zip(&self.kappa) {
                let sum: f64 = row.iter().map(|v| v.abs()).sum();
                best = best.max(sum + 4.0 * kappa / (self.h * self.h));
            }
        }
        best
    }
}

/// Classical MOL on a `refinement`-times finer mesh than spacing `dx`, with
/// second-order finite differences and fixed-step RK4.
pub fn reference_solve(problem: &PdeProblem, dx: f64, refinement: usize) -> Result<ReferenceSolution> {
    if refinement < 2 {
        return Err(PnmolError::InvalidArgument(format!("refinement must be at least 2, got {refinement}")));
    }
    if !(dx > 0.0 && dx < 1.0) {
        return Err(PnmolError::InvalidArgument(format!("spacing must lie in (0, 1), got {dx}")));
    }
    let intervals = (1.0 / dx).round().max(1.0) as usize * refinement;
    let nf = intervals + 1;
    let h = 1.0 / intervals as f64;
    let xs: Vec<f64> = (0..nf).map(|i| i as f64 * h).collect();
    let model = FineModel { problem, nf, h, kappa: problem.diffusion() };
    let l = problem.fields();

    let initial = problem.initial_at(&xs);
    let mut u = initial.clone();
    if problem.boundary == BoundaryKind::Dirichlet {
        for f in 0..l {
            u[f * nf] = 0.0;
            u[f * nf + nf - 1] = 0.0;
        }
    }
    let span = problem.t_max - problem.t0;
    let max_step = (RK4_STABILITY / model.jacobian_inf_norm(&u).max(f64::MIN_POSITIVE)).min(MAX_STEP);
    let steps = (span / max_step).ceil().max(1.0) as usize;
    let dt = span / steps as f64;
    let limit = BLOWUP_FACTOR * (1.0 + initial.amax());

    let mut snapshots = Vec::with_capacity(steps + 1);
    snapshots.push(initial);
    for k in 0..steps {
        let k1 = model.rhs(&u);
        let k2 = model.rhs(&(&u + &k1 * (0.5 * dt)));
        let k3 = model.rhs(&(&u + &k2 * (0.5 * dt)));
        let k4 = model.rhs(&(&u + &k3 * dt));
        u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if u.iter().any(|v| !v.is_finite()) || u.amax() > limit {
            return Err(PnmolError::Numerical(format!(
                "reference integration unstable at step {} of {steps} (dt = {dt:e})",
                k + 1
            )));
        }
        snapshots.push(u.clone());
    }
    Ok(ReferenceSolution {
        provenance: format!(
            "second-order finite differences on {nf} points ({refinement}x refinement), RK4 with {steps} steps of {dt:e}"
        ),
        t0: problem.t0,
        dt,
        xs,
        fields: l,
        snapshots,
    })
}
