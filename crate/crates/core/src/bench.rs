//! Accuracy and calibration metrics, parameter sweeps and CSV output.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::discretize::BoundaryKind;
use crate::exec::Execution;
use crate::linalg::JitteredCholesky;
use crate::problems::{reference_solve, PdeProblem, ReferenceSolution};
use crate::solver::{self, SolutionPosterior, SolverConfig, Variant};
use crate::{PnmolError, Result};

pub const DEFAULT_REF_REFINE: usize = 10;

/// CSV form of a float: `inf`, `-inf` and `nan` are spelled out.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:e}")
    }
}

fn reference_at(post: &SolutionPosterior, reference: &ReferenceSolution, k: usize) -> Result<DVector<f64>> {
    reference.evaluate_grid(post.time_grid[k], &post.grid)
}

/// Indices of `u` whose values are estimated rather than prescribed:
/// Dirichlet boundary values are excluded.
fn estimated_indices(post: &SolutionPosterior, boundary: BoundaryKind) -> Vec<usize> {
    let q = post.grid.len();
    let mask = post.grid.boundary_mask();
    (0..post.fields * q)
        .filter(|&i| boundary == BoundaryKind::Neumann || !mask[i % q])
        .collect()
}

/// Root-mean-square error over all times, fields and points, relative to the
/// root-mean-square of the reference.
pub fn rmse_relative(post: &SolutionPosterior, reference: &ReferenceSolution) -> Result<f64> {
    let mut err = 0.0;
    let mut norm = 0.0;
    for k in 0..post.len() {
        let r = reference_at(post, reference, k)?;
        err += (post.u_mean(k) - &r).norm_squared();
        norm += r.norm_squared();
    }
    Ok(if norm > 0.0 { (err / norm).sqrt() } else if err == 0.0 { 0.0 } else { f64::INFINITY })
}

/// `eᵀ C⁻¹ e / dim` for one time. Components with exactly zero variance
/// contribute nothing when their error is zero and make the statistic
/// infinite otherwise.
pub fn chi2_step(error: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let n = error.len();
    if n == 0 {
        return Ok(0.0);
    }
    let live: Vec<usize> = (0..n).filter(|&i| cov[(i, i)] > 0.0).collect();
    if (0..n).any(|i| cov[(i, i)] <= 0.0 && error[i] != 0.0) {
        return Ok(f64::INFINITY);
    }
    if live.is_empty() {
        return Ok(0.0);
    }
    let c = cov.select_rows(&live).select_columns(&live);
    let e = error.select_rows(&live);
    Ok(JitteredCholesky::factor(&c)?.mahalanobis_sq(&e) / n as f64)
}

/// Normalized χ² of the calibrated `u` marginals at every time after `t0`.
pub fn chi2_curve(post: &SolutionPosterior, reference: &ReferenceSolution, boundary: BoundaryKind) -> Result<Vec<f64>> {
    let idx = estimated_indices(post, boundary);
    (1..post.len())
        .map(|k| {
            let e = (post.u_mean(k) - reference_at(post, reference, k)?).select_rows(&idx);
            let c = post.u_cov_unscaled(k).select_rows(&idx).select_columns(&idx) * post.gamma_sq;
            chi2_step(&e, &c)
        })
        .collect()
}

pub fn arithmetic_mean(v: &[f64]) -> f64 {
    if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 }
}

pub fn geometric_mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    if v.contains(&0.0) {
        return 0.0;
    }
    (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp()
}

/// Mean over time of the normalized χ² statistic (optimum 1).
pub fn chi2_normalized(post: &SolutionPosterior, reference: &ReferenceSolution, boundary: BoundaryKind) -> Result<f64> {
    Ok(arithmetic_mean(&chi2_curve(post, reference, boundary)?))
}

/// `|mean − ref| / (γ̂·std)` per time and grid value; `0` where both vanish
/// and `+inf` for a positive error with zero std.
pub fn error_uncertainty_ratio(post: &SolutionPosterior, reference: &ReferenceSolution) -> Result<Vec<DVector<f64>>> {
    (0..post.len())
        .map(|k| {
            let e = post.u_mean(k) - reference_at(post, reference, k)?;
            let s = post.u_std(k);
            Ok(DVector::from_fn(e.len(), |i, _| ratio(e[i].abs(), s[i])))
        })
        .collect()
}

fn ratio(err: f64, std: f64) -> f64 {
    if std > 0.0 {
        err / std
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) }
}

/// Median error/uncertainty ratio over estimated values after `t0`.
pub fn median_ratio(post: &SolutionPosterior, reference: &ReferenceSolution, boundary: BoundaryKind) -> Result<f64> {
    let field = error_uncertainty_ratio(post, reference)?;
    let idx = estimated_indices(post, boundary);
    let mut all: Vec<f64> = field.iter().skip(1).flat_map(|r| idx.iter().map(|&i| r[i])).collect();
    Ok(median(&mut all))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub problem: String,
    pub variant: Variant,
    pub dx: f64,
    pub dt: f64,
    pub nu: usize,
    pub seed: u64,
    pub rmse_relative: f64,
    pub chi2_normalized: f64,
    pub chi2_geometric: f64,
    /// Median of the error/uncertainty field.
    pub error_uncertainty_ratio: f64,
    pub runtime_seconds: f64,
    pub gamma_sq: f64,
    pub state_dim: usize,
    pub chi2_curve: Vec<(f64, f64)>,
    pub error: Option<String>,
}

impl MetricsRow {
    fn failed(problem: &str, variant: Variant, dx: f64, dt: f64, nu: usize, seed: u64, err: &PnmolError) -> Self {
        Self {
            problem: problem.to_string(),
            variant,
            dx,
            dt,
            nu,
            seed,
            rmse_relative: f64::NAN,
            chi2_normalized: f64::NAN,
            chi2_geometric: f64::NAN,
            error_uncertainty_ratio: f64::NAN,
            runtime_seconds: f64::NAN,
            gamma_sq: f64::NAN,
            state_dim: 0,
            chi2_curve: Vec::new(),
            error: Some(err.to_string()),
        }
    }
}

/// Metrics of one solve against a reference.
pub fn evaluate(
    problem: &PdeProblem,
    cfg: &SolverConfig,
    reference: &ReferenceSolution,
    seed: u64,
    timed: bool,
) -> Result<MetricsRow> {
    let start = Instant::now();
    let post = solver::solve(problem, cfg)?;
    let runtime = if timed { start.elapsed().as_secs_f64() } else { 0.0 };
    let curve = chi2_curve(&post, reference, problem.boundary)?;
    Ok(MetricsRow {
        problem: problem.name.clone(),
        variant: cfg.variant,
        dx: cfg.dx,
        dt: cfg.dt,
        nu: cfg.nu,
        seed,
        rmse_relative: rmse_relative(&post, reference)?,
        chi2_normalized: arithmetic_mean(&curve),
        chi2_geometric: geometric_mean(&curve),
        error_uncertainty_ratio: median_ratio(&post, reference, problem.boundary)?,
        runtime_seconds: runtime,
        gamma_sq: post.gamma_sq,
        state_dim: post.layout.dim(),
        chi2_curve: post.time_grid[1..].iter().copied().zip(curve).collect(),
        error: None,
    })
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub problem: PdeProblem,
    pub variants: Vec<Variant>,
    pub dxs: Vec<f64>,
    pub dts: Vec<f64>,
    pub nu: usize,
    pub seed: u64,
    pub ref_refine: usize,
    /// Kernel, stencil and prior settings shared by all runs.
    pub base: SolverConfig,
    /// Record wall-clock runtimes; off gives byte-identical output.
    pub timed: bool,
    pub execution: Execution,
}

impl SweepConfig {
    pub fn new(problem: PdeProblem) -> Self {
        Self {
            problem,
            variants: Variant::ALL.to_vec(),
            dxs: vec![0.2],
            dts: vec![0.01],
            nu: 1,
            seed: 0,
            ref_refine: DEFAULT_REF_REFINE,
            base: SolverConfig::default(),
            timed: true,
            execution: Execution::default(),
        }
    }

    /// Runs in row order: `dx` outermost, then `dt`, then variant.
    pub fn runs(&self) -> Vec<SolverConfig> {
        let mut out = Vec::new();
        for &dx in &self.dxs {
            for &dt in &self.dts {
                for &variant in &self.variants {
                    out.push(SolverConfig { variant, dx, dt, nu: self.nu, ..self.base.clone() });
                }
            }
        }
        out
    }
}

/// Runs every configuration; failures become rows with an error message.
/// The reference is computed once per `dx`.
pub fn sweep(cfg: &SweepConfig) -> Vec<MetricsRow> {
    let mut references: HashMap<u64, std::result::Result<ReferenceSolution, PnmolError>> = HashMap::new();
    for &dx in &cfg.dxs {
        references
            .entry(dx.to_bits())
            .or_insert_with(|| reference_solve(&cfg.problem, dx, cfg.ref_refine));
    }
    let runs = cfg.runs();
    cfg.execution.map(runs.len(), |i| {
        let run = &runs[i];
        let result = match &references[&run.dx.to_bits()] {
            Ok(reference) => evaluate(&cfg.problem, run, reference, cfg.seed, cfg.timed),
            Err(e) => Err(e.clone()),
        };
        result.unwrap_or_else(|e| {
            MetricsRow::failed(&cfg.problem.name, run.variant, run.dx, run.dt, run.nu, cfg.seed, &e)
        })
    })
}

pub const METRICS_HEADER: [&str; 14] = [
    "problem",
    "variant",
    "dx",
    "dt",
    "nu",
    "seed",
    "rmse_relative",
    "chi2_normalized",
    "chi2_geometric",
    "error_uncertainty_ratio",
    "runtime_seconds",
    "gamma_sq",
    "state_dim",
    "status",
];

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = METRICS_HEADER.to_vec();
    header.push("message");
    w.write_record(&header)?;
    for r in rows {
        w.write_record([
            r.problem.clone(),
            r.variant.to_string(),
            format_float(r.dx),
            format_float(r.dt),
            r.nu.to_string(),
            r.seed.to_string(),
            format_float(r.rmse_relative),
            format_float(r.chi2_normalized),
            format_float(r.chi2_geometric),
            format_float(r.error_uncertainty_ratio),
            format_float(r.runtime_seconds),
            format_float(r.gamma_sq),
            r.state_dim.to_string(),
            if r.error.is_some() { "error" } else { "ok" }.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-step χ² curves of all rows as `variant,dx,dt,t,chi2` records.
pub fn write_chi2_curves_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["problem", "variant", "dx", "dt", "t", "chi2"])?;
    for r in rows {
        for &(t, c) in &r.chi2_curve {
            w.write_record([
                r.problem.clone(),
                r.variant.to_string(),
                format_float(r.dx),
                format_float(r.dt),
                format_float(t),
                format_float(c),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Smoothed marginals as `t,x,field,mean,std` records.
pub fn write_solution_csv<W: Write>(post: &SolutionPosterior, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "field", "mean", "std"])?;
    let q = post.grid.len();
    for k in 0..post.len() {
        let m = post.u_mean(k);
        let s = post.u_std(k);
        for f in 0..post.fields {
            for n in 0..q {
                w.write_record([
                    format_float(post.time_grid[k]),
                    format_float(post.grid.points()[n][0]),
                    f.to_string(),
                    format_float(m[f * q + n]),
                    format_float(s[f * q + n]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
