//! Mini-batch Riemannian stochastic gradient descent on the manifold of
//! symmetric positive definite matrices, with the tooling to measure how the
//! number of steps and the stochastic-gradient cost scale with batch size.
//!
//! Layout, bottom up:
//!
//! - [`symmat`]: symmetric eigendecomposition and spectral functions.
//! - [`spd`]: affine-invariant geometry (exp/log maps, distance, transport).
//! - [`centroid`]: the centroid loss, its gradients and constant estimators.
//! - [`rsgd`]: step-size schedules and the optimizer loop.
//! - [`experiment`]: batch-size sweeps, model fits and critical batch sizes.
//! - [`dataio`]: synthetic data, image covariance descriptors and file formats.

pub mod centroid;
pub mod dataio;
pub mod error;
pub mod experiment;
pub mod rng;
pub mod rsgd;
pub mod spd;
pub mod symmat;

pub use error::{Error, Result};
