//! One PASS/FAIL line per acceptance criterion.
//!
//! Unmet thresholds are reported, not hidden: every line shows the measured
//! values next to the pinned tolerance. Set `PNMOL_ACCEPTANCE_STRICT=1` to
//! turn any FAIL line into a test failure.

mod common;

use std::io::Write;
use std::time::Instant;

use common::{model_batch_posterior, rel_err, rel_err_vec};
use nalgebra::{DMatrix, DVector};
use pnmol::bench::{sweep, SweepConfig};
use pnmol::discretize::{collocate_global, collocate_local, Grid};
use pnmol::inference::{predict, GaussianBelief, VectorField};
use pnmol::kernels::{DiffOperator, Kernel};
use pnmol::linalg::is_psd;
use pnmol::problems::{heat_1d, lotka_volterra_spatial, reference_solve, sir_spatial, PdeProblem};
use pnmol::solver::{solve, SolverConfig, SolverModel, Variant};
use pnmol::statespace::{discretize_sde, iwp_sde, kron_lift};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Writes past the test harness's output capture so the report always shows.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

struct Report {
    failed: Vec<&'static str>,
}

impl Report {
    fn line(&mut self, id: &'static str, pass: bool, detail: String) {
        emit(&format!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" }));
        if !pass {
            self.failed.push(id);
        }
    }
}

fn criterion_1(report: &mut Report) {
    let start = Instant::now();
    let heat = heat_1d();
    let mut worst = 0.0f64;
    for variant in Variant::ALL {
        let cfg = SolverConfig { variant, dx: 0.25, dt: 0.2, nu: 1, ..SolverConfig::default() };
        let model = SolverModel::new(&heat, &cfg).unwrap();
        assert_eq!(model.times.len(), 6);
        let post = model.solve().unwrap();
        let oracle = model_batch_posterior(&model);
        let floor = 1e-6 * model.prior().cov.norm();
        for (k, o) in oracle.iter().enumerate() {
            worst = worst.max(rel_err_vec(&post.means[k], &o.mean, 1e-3));
            worst = worst.max(rel_err(&post.covs_unscaled[k], &o.cov, floor));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report.line(
        "1",
        worst <= 1e-6 && secs < 10.0,
        format!("max relative deviation from batch conditioning {worst:.2e} (tol 1e-6), {secs:.2} s (limit 10 s)"),
    );
}

/// Weights of the second derivative at 0 from the Vandermonde system.
fn vandermonde_weights(xs: &[f64]) -> DVector<f64> {
    let n = xs.len();
    let v = DMatrix::from_fn(n, n, |m, j| xs[j].powi(m as i32));
    let mut rhs = DVector::zeros(n);
    rhs[2] = 2.0;
    v.lu().solve(&rhs).unwrap()
}

fn criterion_2(report: &mut Report) {
    let se = Kernel::squared_exponential(0.25, 1).unwrap();
    let grid = Grid::uniform_1d(0.0, 1.0, 11).unwrap();
    let mut a = 0.0f64;
    for approx in [
        collocate_global(&se, &DiffOperator::Identity, &grid).unwrap(),
        collocate_local(&se, &DiffOperator::Identity, &grid, 1).unwrap(),
    ] {
        a = a.max((&approx.d - DMatrix::identity(11, 11)).amax()).max(approx.e.amax());
    }

    let poly = Kernel::polynomial(2, 1).unwrap();
    let uneven = Grid::new(
        [0.0, 0.13, 0.3, 0.52, 0.61, 0.8, 1.0].iter().map(|&x| vec![x]).collect(),
        vec![true, false, false, false, false, false, true],
    )
    .unwrap();
    let b = collocate_global(&poly, &DiffOperator::Laplacian, &uneven)
        .unwrap()
        .e
        .amax()
        .max(collocate_local(&poly, &DiffOperator::Laplacian, &uneven, 1).unwrap().e.amax());

    let h = 0.1;
    let three = Grid::uniform_1d(-h, h, 3).unwrap();
    let row = collocate_global(&poly, &DiffOperator::Laplacian, &three).unwrap().d.row(1).transpose();
    let oracle = vandermonde_weights(&[-h, 0.0, h]);
    let classical = DVector::from_vec(vec![1.0, -2.0, 1.0]) / (h * h);
    let c = rel_err_vec(&row, &oracle, 1.0).max(rel_err_vec(&row, &classical, 1.0));

    let wide = Kernel::squared_exponential(1.0, 1).unwrap();
    let seven = Grid::uniform_1d(0.0, 1.0, 7).unwrap();
    let global = collocate_global(&wide, &DiffOperator::Laplacian, &seven).unwrap();
    let local = collocate_local(&wide, &DiffOperator::Laplacian, &seven, 3).unwrap();
    let d = (&local.d - &global.d).amax() / global.d.amax();

    report.line(
        "2",
        a <= 1e-8 && b <= 1e-7 && c <= 1e-6 && d <= 1e-8,
        format!(
            "(a) identity {a:.1e} (tol 1e-8), (b) polynomial E {b:.1e} (tol 1e-7), \
             (c) FD weights {c:.1e} (tol 1e-6), (d) full radius vs global {d:.1e} (tol 1e-8)"
        ),
    );
}

fn criterion_3(report: &mut Report) {
    let start = Instant::now();
    let mut cfg = SweepConfig::new(heat_1d());
    cfg.dxs = vec![0.2];
    cfg.dts = vec![1e-3];
    let rows = sweep(&cfg);
    let ratio = |v: Variant| rows.iter().find(|r| r.variant == v).unwrap().error_uncertainty_ratio;
    let (latent, white, mol) = (ratio(Variant::Latent), ratio(Variant::White), ratio(Variant::Mol));
    let secs = start.elapsed().as_secs_f64();
    let bounded = |r: f64| (1e-2..=1e2).contains(&r);
    let pass = mol >= 100.0 * latent && mol >= 100.0 * white && bounded(latent) && bounded(white) && secs < 60.0;
    report.line(
        "3",
        pass,
        format!(
            "median error/uncertainty ratio latent {latent:.3e}, white {white:.3e}, mol {mol:.3e} \
             (mol/latent {:.0}x, mol/white {:.0}x, need >= 100x; PNMOL in [1e-2, 1e2]), {secs:.2} s (limit 60 s)",
            mol / latent,
            mol / white
        ),
    );
}

fn criterion_4(report: &mut Report) {
    let start = Instant::now();
    let mut cfg = SweepConfig::new(lotka_volterra_spatial());
    cfg.dxs = vec![0.2];
    cfg.dts = vec![1e-2, 5e-3, 1e-3];
    let rows = sweep(&cfg);
    assert!(rows.iter().all(|r| r.error.is_none()));
    let secs = start.elapsed().as_secs_f64();

    let mut stagnation = true;
    let mut spread = Vec::new();
    for v in Variant::ALL {
        let rmse: Vec<f64> = rows.iter().filter(|r| r.variant == v).map(|r| r.rmse_relative).collect();
        let ratio = rmse.iter().cloned().fold(f64::MIN, f64::max) / rmse.iter().cloned().fold(f64::MAX, f64::min);
        stagnation &= ratio < 2.0;
        spread.push(format!("{v} {ratio:.2}x"));
    }
    report.line(
        "4a",
        stagnation && secs < 300.0,
        format!("RMSE max/min across dt: {} (need < 2x), {secs:.1} s (limit 300 s)", spread.join(", ")),
    );

    let mut calibrated = true;
    let mut values = Vec::new();
    for v in [Variant::Latent, Variant::White] {
        let chi2: Vec<f64> = rows.iter().filter(|r| r.variant == v).map(|r| r.chi2_normalized).collect();
        calibrated &= chi2.iter().all(|c| (1e-2..=1e1).contains(c));
        values.push(format!("{v} [{}]", chi2.iter().map(|c| format!("{c:.2e}")).collect::<Vec<_>>().join(", ")));
    }
    let mol = rows.iter().rfind(|r| r.variant == Variant::Mol).unwrap();
    let mol_bad = mol.chi2_normalized > 1e2;
    report.line(
        "4b",
        calibrated && mol_bad,
        format!(
            "chi2 over dt = 1e-2, 5e-3, 1e-3: {} (need all in [1e-2, 1e1]); mol at dt = 1e-3 {:.2e} (need > 1e2)",
            values.join(", "),
            mol.chi2_normalized
        ),
    );
}

/// Fastest of a few repetitions, to damp scheduler noise.
fn best_runtime(problem: &PdeProblem, cfg: &SolverConfig) -> f64 {
    (0..3)
        .map(|_| {
            let start = Instant::now();
            solve(problem, cfg).unwrap();
            start.elapsed().as_secs_f64()
        })
        .fold(f64::MAX, f64::min)
}

fn criterion_5(report: &mut Report) {
    let mut halved = true;
    for p in [heat_1d(), lotka_volterra_spatial(), sir_spatial()] {
        for dx in [0.25, 0.05] {
            let c = |variant| SolverConfig { variant, dx, dt: 0.05, ..SolverConfig::default() };
            let l = SolverModel::new(&p, &c(Variant::Latent)).unwrap();
            let w = SolverModel::new(&p, &c(Variant::White)).unwrap();
            halved &= 2 * w.layout.dim() == l.layout.u_dim() + l.layout.xi_dim();
        }
    }
    let heat = heat_1d();
    let c = |variant| SolverConfig { variant, dx: 0.05, dt: 0.01, ..SolverConfig::default() };
    let latent = best_runtime(&heat, &c(Variant::Latent));
    let white = best_runtime(&heat, &c(Variant::White));
    report.line(
        "5",
        halved && white < latent,
        format!(
            "white state is half of latent U+xi: {halved}; runtime at N+1 = 21: white {white:.3} s, latent {latent:.3} s"
        ),
    );
}

fn simpson_sigma(nu: usize, h: f64) -> DMatrix<f64> {
    let n = nu + 1;
    let fact = |k: usize| (1..=k).product::<usize>() as f64;
    // Φ(s) B has entries s^{ν−i}/(ν−i)!
    let integrand = |s: f64| {
        let v = DVector::from_fn(n, |i, _| s.powi((nu - i) as i32) / fact(nu - i));
        &v * v.transpose()
    };
    let m = 2000;
    let step = h / m as f64;
    let mut acc = integrand(0.0) + integrand(h);
    for j in 1..m {
        acc += integrand(j as f64 * step) * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * (step / 3.0)
}

fn jacobian_error(p: &PdeProblem, rng: &mut StdRng) -> f64 {
    let q = 4 * p.fields();
    let u = DVector::from_fn(q, |_, _| rng.random_range(0.1..1.5));
    let du = DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0));
    let (ju, jd) = p.jacobians(0.0, &u, &du);
    let step = 1e-6;
    let mut worst = 0.0f64;
    for (jac, wrt_u) in [(ju, true), (jd, false)] {
        let mut fd = DMatrix::zeros(q, q);
        for j in 0..q {
            let (mut up, mut dn) = ((u.clone(), du.clone()), (u.clone(), du.clone()));
            if wrt_u {
                up.0[j] += step;
                dn.0[j] -= step;
            } else {
                up.1[j] += step;
                dn.1[j] -= step;
            }
            let col = (p.eval(0.0, &up.0, &up.1) - p.eval(0.0, &dn.0, &dn.1)) / (2.0 * step);
            fd.set_column(j, &col);
        }
        worst = worst.max(rel_err(&jac, &fd, 1.0));
    }
    worst
}

fn criterion_6(report: &mut Report) {
    let mut psd = true;
    for mut p in [heat_1d(), lotka_volterra_spatial(), sir_spatial()] {
        p.t_max = 0.3;
        for variant in Variant::ALL {
            for nu in [1, 2] {
                let cfg = SolverConfig { variant, nu, dx: 0.2, dt: 0.05, ..SolverConfig::default() };
                let post = solve(&p, &cfg).unwrap();
                psd &= post.covs_unscaled.iter().all(|c| is_psd(c, 1e-8));
            }
        }
    }

    let mut jac = 0.0f64;
    for seed in 0..10 {
        let mut rng = StdRng::seed_from_u64(seed);
        for p in [heat_1d(), lotka_volterra_spatial(), sir_spatial()] {
            jac = jac.max(jacobian_error(&p, &mut rng));
        }
    }

    let mut iwp = 0.0f64;
    for nu in 0..=2 {
        for h in [0.1, 1.0] {
            let tr = discretize_sde(&iwp_sde(nu), h).unwrap();
            iwp = iwp.max(rel_err(&tr.sigma, &simpson_sigma(nu, h), 1e-300));
        }
    }

    let mut ck = 0.0f64;
    let mut rng = StdRng::seed_from_u64(1);
    for nu in [1, 2] {
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let m = &a * a.transpose();
        let lift = |h: f64| {
            let t = discretize_sde(&iwp_sde(nu), h).unwrap();
            kron_lift(&t.phi, &t.sigma, &m, h)
        };
        let dim = 3 * (nu + 1);
        let b = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let belief = GaussianBelief::new(DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)), &b * b.transpose())
            .unwrap();
        let two = predict(&predict(&belief, &lift(0.25)).unwrap(), &lift(0.25)).unwrap();
        let one = predict(&belief, &lift(0.5)).unwrap();
        ck = ck.max(rel_err_vec(&two.mean, &one.mean, 1.0)).max(rel_err(&two.cov, &one.cov, 1.0));
    }

    let mut scale = 0.0f64;
    let mut lv = lotka_volterra_spatial();
    lv.t_max = 0.5;
    for variant in Variant::ALL {
        let base = SolverConfig { variant, dx: 0.2, dt: 0.05, ..SolverConfig::default() };
        let a = solve(&lv, &base).unwrap();
        let b = solve(&lv, &SolverConfig { prior_scale: 7.0, ..base }).unwrap();
        for k in 0..a.len() {
            scale = scale.max(rel_err_vec(&b.means[k], &a.means[k], 1.0));
        }
        scale = scale.max((b.gamma_sq * 7.0 - a.gamma_sq).abs() / a.gamma_sq);
    }

    report.line(
        "6",
        psd && jac <= 1e-6 && iwp <= 1e-10 && ck <= 1e-10 && scale <= 1e-10,
        format!(
            "covariances PSD: {psd}; Jacobian vs FD {jac:.1e} (tol 1e-6); IWP vs quadrature {iwp:.1e} (tol 1e-10); \
             Chapman-Kolmogorov {ck:.1e} (tol 1e-10); means under covariance rescaling {scale:.1e} (tol 1e-10)"
        ),
    );
}

fn criterion_7(report: &mut Report) {
    let mut p = heat_1d();
    p.set("alpha", "1").unwrap();
    p.set("initial", "sine").unwrap();
    p.t_max = 0.1;
    let grid = Grid::with_spacing_1d(0.0, 1.0, 0.1).unwrap();
    let xs: Vec<f64> = grid.points().iter().map(|x| x[0]).collect();
    let ten = reference_solve(&p, 0.1, 10).unwrap();
    let twenty = reference_solve(&p, 0.1, 20).unwrap();
    let exact = DVector::from_iterator(
        xs.len(),
        xs.iter().map(|&x| (-std::f64::consts::PI.powi(2) * 0.1).exp() * (std::f64::consts::PI * x).sin()),
    );
    let closed = rel_err_vec(&ten.evaluate(0.1, &xs).unwrap(), &exact, 1e-300);
    let mut refine = 0.0f64;
    for t in [0.02, 0.05, 0.1] {
        let a = ten.evaluate(t, &xs).unwrap();
        refine = refine.max(rel_err_vec(&twenty.evaluate(t, &xs).unwrap(), &a, 1e-300));
    }
    report.line(
        "7",
        closed <= 1e-4 && refine < 1e-3,
        format!("closed form at t = 0.1: {closed:.2e} (tol 1e-4); refinement 10 vs 20: {refine:.2e} (tol 1e-3)"),
    );
}

#[test]
fn acceptance_criteria() {
    let mut report = Report { failed: Vec::new() };
    criterion_1(&mut report);
    criterion_2(&mut report);
    criterion_3(&mut report);
    criterion_4(&mut report);
    criterion_5(&mut report);
    criterion_6(&mut report);
    criterion_7(&mut report);
    if report.failed.is_empty() {
        emit("all acceptance criteria pass");
    } else {
        emit(&format!("failing criteria: {}", report.failed.join(", ")));
    }
    if std::env::var_os("PNMOL_ACCEPTANCE_STRICT").is_some_and(|v| v != "0") {
        assert!(report.failed.is_empty(), "failing criteria: {:?}", report.failed);
    }
}
