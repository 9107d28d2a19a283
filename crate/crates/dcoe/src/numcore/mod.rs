//! Numeric foundations: Gaussian special functions, dense linear algebra,
//! and reproducible random streams.

pub mod gauss;
pub mod linalg;
pub mod rng;

pub use gauss::{normal_cdf, normal_pdf, normal_quantile, normal_sf};
pub use linalg::{cholesky, mvn_sample, CholeskyFactor, DenseMatrix, CHOLESKY_PIVOT_TOL};
pub use rng::{derive_seed, RngStream};
