//! Probabilistic numerical method of lines (PNMOL).
//!
//! The crate turns a time-dependent PDE `∂u/∂t = F(t, x, u, 𝓓u)` into a
//! state-space model and solves it with Gaussian filtering and smoothing.
//! Unlike the classical method of lines, the error of the spatial
//! discretization `𝓓u(𝕏) ≈ D u(𝕏)` is kept as a Gaussian quantity with
//! covariance `E` and enters the temporal inference, either as a latent force
//! (an integrated Wiener process in the state) or as white measurement noise.
//!
//! Layout:
//!
//! - [`kernels`]: covariance kernels and closed-form operator application.
//! - [`discretize`]: differentiation matrices `D` and error covariances `E`,
//!   globally or on nearest-neighbour stencils, plus boundary operators.
//! - [`statespace`]: integrated Wiener process priors, their discretization
//!   and the Kronecker lift onto a spatial grid.
//! - [`inference`]: prediction, linearization, measurement updates,
//!   smoothing and output-scale calibration.
//! - [`problems`]: benchmark PDEs and classical reference solutions.
//! - [`solver`]: the latent-force, white-noise and classical MOL solvers.
//! - [`bench`]: metrics, sweeps and CSV output.
//!
//! All covariances are carried unscaled; the global output scale `γ²` is
//! estimated after the forward pass and applied when reading out marginals.

pub mod bench;
pub mod discretize;
pub mod error;
pub mod exec;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod problems;
pub mod solver;
pub mod statespace;

pub use error::{PnmolError, Result};
pub use exec::Execution;
