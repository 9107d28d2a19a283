//! Dual control of testing errors (DCOE) for high-dimensional Gaussian
//! test statistics under arbitrary covariance dependence.
//!
//! The crate estimates the false negative proportion (FNP) of a threshold
//! selection rule, selects the smallest top set whose estimated FNP falls
//! below a user-specified level, and ships the supporting pieces: the
//! signal-proportion estimator with Monte-Carlo bounding sequences, the
//! covariance models and dependence calibration used in the numerical
//! experiments, a BH-FDR baseline, and a replication harness that writes
//! plot-ready tables.
//!
//! Modules map onto the pipeline:
//!
//! - [`numcore`]: tail-accurate normal functions, Cholesky sampling, seeded
//!   parallel random streams;
//! - [`depmodels`]: covariance model construction, the dependence summary
//!   `(rho_bar, eta)`, and the consistency boundaries `mu_1`, `mu_2`;
//! - [`fnpcontrol`]: the FNP estimator, the dual-control selection rule, and
//!   realized FNP/FDP;
//! - [`proportion`]: bounding-sequence calibration and the two-exponent
//!   signal-proportion estimator;
//! - [`baselines`]: BH-FDR selection and the FNP/FDP/FM evaluation metrics;
//! - [`simharness`]: declarative experiment specs, the replication driver,
//!   the estimator-consistency curve, and the 2-D grid experiment.

pub mod baselines;
pub mod depmodels;
pub mod error;
pub mod fmt;
pub mod fnpcontrol;
pub mod numcore;
pub mod proportion;
pub mod simharness;

pub use error::{Error, Result};
