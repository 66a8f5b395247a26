use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::{time_grid, SolutionPosterior, SolverConfig, SpatialPrior, StateLayout, StencilChoice, Variant};
use crate::discretize::{self, BoundaryApprox, BoundaryKind, Grid, OperatorApprox};
use crate::inference::{self, GaussianBelief, LinearizedObservation, ResidualRecord, StateSlices, VectorField};
use crate::linalg;
use crate::problems::PdeProblem;
use crate::statespace::{discretize_sde, iwp_sde, kron_lift, DiscreteTransition, LtiSde};
use crate::{PnmolError, Result};

/// Full-grid reconstruction `u(𝕏) = P u_state + c` of an eliminated state.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
}

/// The right-hand side seen by the reduced MOL state: the pointwise field
/// with an affine offset on the operator argument from eliminated values.
struct ShiftedField<'a> {
    problem: &'a PdeProblem,
    shift: &'a DVector<f64>,
}

impl VectorField for ShiftedField<'_> {
    fn eval(&self, t: f64, u: &DVector<f64>, du: &DVector<f64>) -> DVector<f64> {
        self.problem.eval(t, u, &(du + self.shift))
    }

    fn jacobians(&self, t: f64, u: &DVector<f64>, du: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        self.problem.jacobians(t, u, &(du + self.shift))
    }
}

/// Boundary rows `B u(𝕏) − g ≈ 0` with error covariance `R`, all fields.
#[derive(Debug, Clone)]
struct BoundaryRows {
    b: DMatrix<f64>,
    r: DMatrix<f64>,
    g: DVector<f64>,
}

/// Assembled state-space model of one solver run.
/// Gram matrix of the spatial prior on a point set.
type GramFn<'a> = dyn Fn(&[Vec<f64>]) -> Result<DMatrix<f64>> + 'a;

#[derive(Debug, Clone)]
pub struct SolverModel {
    pub problem: PdeProblem,
    pub config: SolverConfig,
    pub grid: Grid,
    pub layout: StateLayout,
    pub times: Vec<f64>,
    sde: LtiSde,
    m_u: DMatrix<f64>,
    m_xi: DMatrix<f64>,
    m_theta: DMatrix<f64>,
    /// Differentiation matrix acting on the state's `U` values.
    d: DMatrix<f64>,
    /// Discretization error covariance on the operator values.
    e: DMatrix<f64>,
    boundary: Option<BoundaryRows>,
    embedding: Option<Embedding>,
    shift: DVector<f64>,
    h0: DVector<f64>,
}

/// `I_copies ⊗ m`.
fn fieldwise(m: &DMatrix<f64>, copies: usize) -> DMatrix<f64> {
    linalg::repeat_diag(m, copies)
}

fn spatial_approx(cfg: &SolverConfig, problem: &PdeProblem, grid: &Grid) -> Result<OperatorApprox> {
    match cfg.stencil {
        StencilChoice::Global => discretize::collocate_global(&cfg.kernel, &problem.operator(), grid),
        StencilChoice::Local(radius) => discretize::collocate_local(&cfg.kernel, &problem.operator(), grid, radius),
    }
}

fn boundary_approx(cfg: &SolverConfig, problem: &PdeProblem, grid: &Grid) -> Result<BoundaryApprox> {
    let radius = match cfg.stencil {
        StencilChoice::Global => None,
        StencilChoice::Local(r) => Some(r),
    };
    discretize::discretize_boundary(&cfg.kernel, problem.boundary, grid, radius)
}

/// Nearest interior neighbour of every boundary point, ties by index.
fn nearest_interior(grid: &Grid, i: usize) -> Result<(usize, f64)> {
    let p = &grid.points()[i];
    grid.interior_indices()
        .into_iter()
        .map(|j| {
            let d: f64 = grid.points()[j].iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            (j, d.sqrt())
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| PnmolError::InvalidArgument("grid has no interior points".into()))
}

impl SolverModel {
    pub fn new(problem: &PdeProblem, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = Grid::with_spacing_1d(0.0, 1.0, cfg.dx)?;
        let times = time_grid(problem.t0, problem.t_max, cfg.dt)?;
        let l = problem.fields();
        let q = grid.len();
        let nb = grid.boundary_indices().len();
        let sde = iwp_sde(cfg.nu);
        let approx = spatial_approx(cfg, problem, &grid)?;
        let d_full = fieldwise(&approx.d, l);
        let h_full = problem.initial_values(&grid)?;
        let kernel_gram = |points: &[Vec<f64>]| cfg.kernel.gram(points, points);

        if cfg.variant == Variant::Mol {
            return Self::new_mol(problem, cfg, grid, times, sde, d_full, h_full, &kernel_gram);
        }

        let bc = boundary_approx(cfg, problem, &grid)?;
        let boundary = BoundaryRows {
            b: fieldwise(&bc.b, l),
            r: fieldwise(&bc.r, l) * cfg.error_scale,
            g: problem.boundary_values(&grid),
        };
        // ϑ is identically zero under Dirichlet conditions (R = 0) and is not carried.
        let latent = cfg.variant == Variant::Latent;
        let theta_points = if latent && problem.boundary == BoundaryKind::Neumann { nb } else { 0 };
        let layout = StateLayout { fields: l, points: q, nu: cfg.nu, has_xi: latent, theta_points };
        let m_u = match cfg.spatial_prior {
            SpatialPrior::Identity => DMatrix::identity(l * q, l * q),
            SpatialPrior::Kernel => fieldwise(&kernel_gram(grid.points())?, l),
        };
        let e = fieldwise(&approx.e, l) * cfg.error_scale;
        let m_xi = if latent { e.clone() } else { DMatrix::zeros(0, 0) };
        let m_theta = if theta_points > 0 { boundary.r.clone() } else { DMatrix::zeros(0, 0) };
        Ok(Self {
            problem: problem.clone(),
            config: cfg.clone(),
            grid,
            layout,
            times,
            sde,
            m_u: m_u * cfg.prior_scale,
            m_xi: m_xi * cfg.prior_scale,
            m_theta: m_theta * cfg.prior_scale,
            d: d_full,
            e: e * cfg.prior_scale,
            boundary: Some(BoundaryRows {
                r: boundary.r * cfg.prior_scale,
                ..boundary
            }),
            embedding: None,
            shift: DVector::zeros(l * q),
            h0: h_full,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn new_mol(
        problem: &PdeProblem,
        cfg: &SolverConfig,
        grid: Grid,
        times: Vec<f64>,
        sde: LtiSde,
        d_full: DMatrix<f64>,
        h_full: DVector<f64>,
        kernel_gram: &GramFn<'_>,
    ) -> Result<Self> {
        let l = problem.fields();
        let q = grid.len();
        let interior = grid.interior_indices();
        let qi = interior.len();
        let g = problem.boundary_values(&grid);
        let boundary = grid.boundary_indices();

        // Reconstruction of all grid values from the interior unknowns.
        let mut p_one = DMatrix::zeros(q, qi);
        for (col, &i) in interior.iter().enumerate() {
            p_one[(i, col)] = 1.0;
        }
        let mut lambda = vec![0.0; q];
        if problem.boundary == BoundaryKind::Neumann {
            for &i in &boundary {
                let (j, dist) = nearest_interior(&grid, i)?;
                let col = interior.iter().position(|&v| v == j).expect("interior index");
                p_one[(i, col)] = 1.0;
                lambda[i] = dist;
            }
        }
        let p = fieldwise(&p_one, l);
        let mut c = DVector::zeros(l * q);
        for f in 0..l {
            for (bi, &i) in boundary.iter().enumerate() {
                let gv = g[f * boundary.len() + bi];
                c[f * q + i] = match problem.boundary {
                    BoundaryKind::Dirichlet => gv,
                    BoundaryKind::Neumann => lambda[i] * gv,
                };
            }
        }
        let select: Vec<usize> = (0..l).flat_map(|f| interior.iter().map(move |&i| f * q + i)).collect();
        let d_rows = d_full.select_rows(&select);
        let d = &d_rows * &p;
        let shift = &d_rows * &c;
        let h0 = h_full.select_rows(&select);

        let interior_points: Vec<Vec<f64>> = interior.iter().map(|&i| grid.points()[i].clone()).collect();
        let m_u = match cfg.spatial_prior {
            SpatialPrior::Identity => DMatrix::identity(l * qi, l * qi),
            SpatialPrior::Kernel => fieldwise(&kernel_gram(&interior_points)?, l),
        };
        let layout = StateLayout { fields: l, points: qi, nu: cfg.nu, has_xi: false, theta_points: 0 };
        Ok(Self {
            problem: problem.clone(),
            config: cfg.clone(),
            grid,
            layout,
            times,
            sde,
            m_u: m_u * cfg.prior_scale,
            m_xi: DMatrix::zeros(0, 0),
            m_theta: DMatrix::zeros(0, 0),
            d,
            e: DMatrix::zeros(l * qi, l * qi),
            boundary: None,
            embedding: Some(Embedding { p, c }),
            shift,
            h0,
        })
    }

    /// Differentiation matrix of the spatial operator on the state grid.
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// Error covariance of the spatial discretization.
    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    /// Prior at `t0`: `N(0, C0 ⊗ M)` for every process block.
    pub fn prior(&self) -> GaussianBelief {
        let c0 = &self.sde.init_cov;
        let blocks = [c0.kronecker(&self.m_u), c0.kronecker(&self.m_xi), c0.kronecker(&self.m_theta)];
        let cov = linalg::block_diag(&blocks.iter().collect::<Vec<_>>());
        GaussianBelief { mean: DVector::zeros(self.layout.dim()), cov }
    }

    pub fn transition(&self, h: f64) -> Result<DiscreteTransition> {
        let tr = discretize_sde(&self.sde, h)?;
        let parts: Vec<DiscreteTransition> = [&self.m_u, &self.m_xi, &self.m_theta]
            .into_iter()
            .filter(|m| m.nrows() > 0)
            .map(|m| kron_lift(&tr.phi, &tr.sigma, m, h))
            .collect();
        let phis: Vec<&DMatrix<f64>> = parts.iter().map(|t| &t.phi).collect();
        let sigmas: Vec<&DMatrix<f64>> = parts.iter().map(|t| &t.sigma).collect();
        Ok(DiscreteTransition { phi: linalg::block_diag(&phis), sigma: linalg::block_diag(&sigmas), h })
    }

    /// Exact observation of the initial values `U(t0) = h(𝕏)`.
    pub fn initial_observation(&self) -> LinearizedObservation {
        let n = self.h0.len();
        let mut h = DMatrix::zeros(n, self.layout.dim());
        let u = self.layout.u(0);
        for i in 0..n {
            h[(i, u.start + i)] = 1.0;
        }
        LinearizedObservation::dirac(h, -&self.h0)
    }

    /// PDE residual (and boundary rows) linearized at the state `eta`.
    pub fn observe(&self, t: f64, eta: &DVector<f64>) -> Result<LinearizedObservation> {
        let lay = &self.layout;
        let slices = StateSlices { dim: lay.dim(), u: lay.u(0), udot: lay.u(1), xi: lay.xi(0) };
        let eta_u = eta.rows_range(lay.u(0)).into_owned();
        let eta_xi = lay.xi(0).map(|r| eta.rows_range(r).into_owned());
        let field = ShiftedField { problem: &self.problem, shift: &self.shift };
        let lin = inference::linearize(&field, t, &eta_u, eta_xi.as_ref(), &self.d, &slices)?;
        let mut pde = lin.obs;
        if self.config.variant == Variant::White {
            pde.noise = linalg::symmetrized(&lin.h_xi * &self.e * lin.h_xi.transpose());
        }
        let Some(bc) = &self.boundary else {
            return Ok(pde);
        };
        let rows = bc.b.nrows();
        if rows == 0 {
            return Ok(pde);
        }
        let mut h = DMatrix::zeros(rows, lay.dim());
        h.view_mut((0, lay.u(0).start), (rows, bc.b.ncols())).copy_from(&bc.b);
        let mut noise = DMatrix::zeros(rows, rows);
        match lay.theta(0) {
            Some(theta) => {
                for i in 0..rows {
                    h[(i, theta.start + i)] = -1.0;
                }
            }
            None if self.config.variant == Variant::White => noise = bc.r.clone(),
            None => {}
        }
        let boundary = LinearizedObservation { h, b: -&bc.g, noise };
        LinearizedObservation::stack(&[pde, boundary])
    }

    /// Forward filter, backward smoother and calibration.
    pub fn solve(&self) -> Result<SolutionPosterior> {
        let (mut beliefs, records, transitions) = self.filter()?;
        let steps: Vec<&DiscreteTransition> = transitions.1.iter().map(|&i| &transitions.0[i]).collect();
        inference::smooth_in_place(&mut beliefs, &steps)?;
        let gamma_sq = if self.config.calibrate { inference::calibrate(&records)? } else { 1.0 };
        let (means, covs_unscaled) = beliefs.into_iter().map(|b| (b.mean, b.cov)).unzip();
        Ok(SolutionPosterior {
            variant: self.config.variant,
            time_grid: self.times.clone(),
            grid: self.grid.clone(),
            fields: self.problem.fields(),
            means,
            covs_unscaled,
            gamma_sq,
            layout: self.layout,
            embedding: self.embedding.clone(),
        })
    }

    /// Filtered beliefs, residual records, and the distinct transitions with
    /// the index of the one used at each step.
    #[allow(clippy::type_complexity)]
    pub fn filter(&self) -> Result<(Vec<GaussianBelief>, Vec<ResidualRecord>, (Vec<DiscreteTransition>, Vec<usize>))> {
        let t0 = self.times[0];
        let (b, _) = inference::update(&self.prior(), &self.initial_observation(), t0)?;
        let (b, rec) = inference::update(&b, &self.observe(t0, &b.mean)?, t0)?;
        let mut beliefs = Vec::with_capacity(self.times.len());
        let mut records = vec![rec];
        beliefs.push(b);

        let mut distinct: Vec<DiscreteTransition> = Vec::new();
        let mut lookup: HashMap<u64, usize> = HashMap::new();
        let mut used = Vec::with_capacity(self.times.len() - 1);
        for k in 1..self.times.len() {
            let h = self.times[k] - self.times[k - 1];
            let idx = match lookup.get(&h.to_bits()) {
                Some(&i) => i,
                None => {
                    distinct.push(self.transition(h)?);
                    lookup.insert(h.to_bits(), distinct.len() - 1);
                    distinct.len() - 1
                }
            };
            used.push(idx);
            let pred = inference::predict(&beliefs[k - 1], &distinct[idx])?;
            let obs = self.observe(self.times[k], &pred.mean)?;
            let (b, rec) = inference::update(&pred, &obs, self.times[k]).map_err(|e| annotate(e, self.times[k]))?;
            beliefs.push(b);
            records.push(rec);
        }
        Ok((beliefs, records, (distinct, used)))
    }
}

fn annotate(e: PnmolError, t: f64) -> PnmolError {
    match e {
        PnmolError::Factorization(m) => PnmolError::Factorization(format!("{m} at t = {t}")),
        PnmolError::Numerical(m) => PnmolError::Numerical(format!("{m} at t = {t}")),
        other => other,
    }
}
