//! Brute-force joint-Gaussian conditioning over whole state chains.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pnmol::inference::{GaussianBelief, LinearizedObservation};
use pnmol::statespace::DiscreteTransition;

/// Joint prior of `x_0..x_K` for the Markov chain started at `prior`.
pub fn joint_prior(prior: &GaussianBelief, transitions: &[DiscreteTransition]) -> (DVector<f64>, DMatrix<f64>) {
    let n = prior.mean.len();
    let steps = transitions.len() + 1;
    let mut means = vec![prior.mean.clone()];
    let mut covs = vec![prior.cov.clone()];
    for tr in transitions {
        let m = &tr.phi * means.last().unwrap();
        let c = &tr.phi * covs.last().unwrap() * tr.phi.transpose() + &tr.sigma;
        means.push(m);
        covs.push(c);
    }
    let mut mean = DVector::zeros(n * steps);
    let mut cov = DMatrix::zeros(n * steps, n * steps);
    for i in 0..steps {
        mean.rows_mut(i * n, n).copy_from(&means[i]);
        // Cov(x_j, x_i) = Φ_j ⋯ Φ_{i+1} C_i for j ≥ i
        let mut block = covs[i].clone();
        for j in i..steps {
            if j > i {
                block = &transitions[j - 1].phi * block;
            }
            cov.view_mut((j * n, i * n), (n, n)).copy_from(&block);
            cov.view_mut((i * n, j * n), (n, n)).copy_from(&block.transpose());
        }
    }
    (mean, cov)
}

/// Marginals of `x_k` given all observations `(time index, H x_k + b = 0)`.
/// Redundant observation rows are handled by a pseudo-inverse.
pub fn batch_posterior(
    prior: &GaussianBelief,
    transitions: &[DiscreteTransition],
    observations: &[(usize, LinearizedObservation)],
) -> Vec<GaussianBelief> {
    let n = prior.mean.len();
    let steps = transitions.len() + 1;
    let (mean, cov) = joint_prior(prior, transitions);
    let rows: usize = observations.iter().map(|(_, o)| o.h.nrows()).sum();
    let mut h = DMatrix::zeros(rows, n * steps);
    let mut b = DVector::zeros(rows);
    let mut r = DMatrix::zeros(rows, rows);
    let mut at = 0;
    for (k, o) in observations {
        let m = o.h.nrows();
        h.view_mut((at, k * n), (m, n)).copy_from(&o.h);
        b.rows_mut(at, m).copy_from(&o.b);
        r.view_mut((at, at), (m, m)).copy_from(&o.noise);
        at += m;
    }
    let s = &h * &cov * h.transpose() + r;
    let s = (&s + s.transpose()) * 0.5;
    let tol = 1e-13 * s.amax();
    let s_inv = s.pseudo_inverse(tol).expect("pseudo-inverse");
    let gain = &cov * h.transpose() * s_inv;
    let post_mean = &mean - &gain * (&h * &mean + b);
    let post_cov = &cov - &gain * &h * &cov;
    (0..steps)
        .map(|k| GaussianBelief {
            mean: post_mean.rows(k * n, n).into_owned(),
            cov: post_cov.view((k * n, k * n), (n, n)).into_owned(),
        })
        .collect()
}

/// `‖a − b‖ / max(‖b‖, floor)` in the Frobenius norm.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}

use pnmol::solver::SolverModel;

/// Batch posterior of a linear problem, assembled from the model's own
/// prior, transitions and observations.
pub fn model_batch_posterior(model: &SolverModel) -> Vec<GaussianBelief> {
    let times = &model.times;
    let dim = model.layout.dim();
    let transitions: Vec<DiscreteTransition> =
        times.windows(2).map(|w| model.transition(w[1] - w[0]).unwrap()).collect();
    let zero = DVector::zeros(dim);
    let mut observations = vec![(0, model.initial_observation())];
    for (k, &t) in times.iter().enumerate() {
        observations.push((k, model.observe(t, &zero).unwrap()));
    }
    batch_posterior(&model.prior(), &transitions, &observations)
}
