//! Covariance models, the dependence calibration `(rho_bar, eta)`, and the
//! consistency boundaries `mu_1`, `mu_2`, `mu_min`.
//!
//! `eta` re-parameterizes the average absolute correlation
//! `rho_bar = ||Sigma||_1 / p^2` as `rho_bar = p^{-eta}`: `eta = 1` is the
//! independent end, `eta = 0` the fully correlated end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{DenseMatrix, RngStream};

/// Declarative description of a correlation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSpec {
    Identity,
    /// `sigma_ij = lambda^|i-j|`.
    Autoregressive { lambda: f64 },
    /// Diagonal blocks of size `block_size`, off-diagonal `within_corr`
    /// inside each block. A trailing block is truncated when the size does
    /// not divide `p`.
    Block { block_size: usize, within_corr: f64 },
    /// Diagonal blocks with sizes drawn uniformly from
    /// `[min_size, max_size]` until they cover `p`, the last one truncated.
    RandomBlock { min_size: usize, max_size: usize, within_corr: f64 },
    /// One-factor model: `V = tau * h h^T + I` with `h ~ N(0, I_p)` drawn
    /// once from `h_seed`, then normalized to unit diagonal.
    Factor { tau: f64, h_seed: u64 },
    Explicit { matrix: DenseMatrix },
}

impl CovarianceSpec {
    /// Validates parameter ranges against the target dimension.
    pub fn validate(&self, p: usize) -> Result<()> {
        if p == 0 {
            return Err(Error::InvalidSpec("dimension p must be positive".into()));
        }
        match self {
            CovarianceSpec::Identity => Ok(()),
            CovarianceSpec::Autoregressive { lambda } => {
                if !(lambda.abs() < 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "autoregressive lambda must lie in (-1, 1), got {lambda}"
                    )));
                }
                Ok(())
            }
            CovarianceSpec::Block { block_size, within_corr } => {
                check_within_corr(*within_corr)?;
                if *block_size == 0 || *block_size > p {
                    return Err(Error::InvalidSpec(format!(
                        "block size must lie in 1..={p}, got {block_size}"
                    )));
                }
                Ok(())
            }
            CovarianceSpec::RandomBlock { min_size, max_size, within_corr } => {
                check_within_corr(*within_corr)?;
                if *min_size == 0 || min_size > max_size {
                    return Err(Error::InvalidSpec(format!(
                        "random block sizes need 1 <= min <= max, got [{min_size}, {max_size}]"
                    )));
                }
                Ok(())
            }
            CovarianceSpec::Factor { tau, .. } => {
                if !(*tau > 0.0 && *tau < 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "factor tau must lie in (0, 1), got {tau}"
                    )));
                }
                Ok(())
            }
            CovarianceSpec::Explicit { matrix } => {
                matrix.check_finite()?;
                if !matrix.is_square() || matrix.rows() != p {
                    return Err(Error::InvalidSpec(format!(
                        "explicit matrix must be {p}x{p}, got {}x{}",
                        matrix.rows(),
                        matrix.cols()
                    )));
                }
                for i in 0..p {
                    if (matrix.get(i, i) - 1.0).abs() > 1e-10 {
                        return Err(Error::InvalidSpec(format!(
                            "explicit matrix must have unit diagonal, entry ({i}, {i}) = {}",
                            matrix.get(i, i)
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_within_corr(r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidSpec(format!(
            "within-block correlation must lie in [0, 1), got {r}"
        )));
    }
    Ok(())
}

/// Materializes the `p x p` correlation matrix for a [`CovarianceSpec`].
///
/// Identity, autoregressive, and block variants are deterministic; the
/// random-block variant consumes `rng` and the factor variant draws `h` from
/// its own `h_seed`, so both are reproducible given seeds.
pub fn build_covariance(spec: &CovarianceSpec, p: usize, rng: &mut RngStream) -> Result<DenseMatrix> {
    spec.validate(p)?;
    match spec {
        CovarianceSpec::Identity => Ok(DenseMatrix::identity(p)),
        CovarianceSpec::Autoregressive { lambda } => {
            let mut pow = vec![0.0; p];
            pow[0] = 1.0;
            for d in 1..p {
                pow[d] = pow[d - 1] * lambda;
            }
            let mut m = DenseMatrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    m.set(i, j, pow[i.abs_diff(j)]);
                }
            }
            Ok(m)
        }
        CovarianceSpec::Block { block_size, within_corr } => {
            let sizes: Vec<usize> = {
                let mut sizes = vec![*block_size; p / block_size];
                if p % block_size != 0 {
                    sizes.push(p % block_size);
                }
                sizes
            };
            Ok(block_diagonal(p, &sizes, *within_corr))
        }
        CovarianceSpec::RandomBlock { min_size, max_size, within_corr } => {
            let mut sizes = Vec::new();
            let mut total = 0usize;
            while total < p {
                let mut size = rng.uniform_inclusive(*min_size, *max_size);
                size = size.min(p - total);
                sizes.push(size);
                total += size;
            }
            Ok(block_diagonal(p, &sizes, *within_corr))
        }
        CovarianceSpec::Factor { tau, h_seed } => {
            let mut h_rng = RngStream::new(*h_seed, 0);
            let mut h = vec![0.0; p];
            h_rng.fill_standard_normal(&mut h);
            // sigma_ij = tau h_i h_j / sqrt((1 + tau h_i^2)(1 + tau h_j^2)),
            // so precompute w_i = sqrt(tau) h_i / sqrt(1 + tau h_i^2).
            let w: Vec<f64> = h
                .iter()
                .map(|&hi| tau.sqrt() * hi / (1.0 + tau * hi * hi).sqrt())
                .collect();
            let mut m = DenseMatrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    m.set(i, j, if i == j { 1.0 } else { w[i] * w[j] });
                }
            }
            Ok(m)
        }
        CovarianceSpec::Explicit { matrix } => Ok(matrix.clone()),
    }
}

fn block_diagonal(p: usize, sizes: &[usize], r: f64) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(p, p);
    let mut start = 0;
    for &size in sizes {
        for i in start..start + size {
            for j in start..start + size {
                m.set(i, j, if i == j { 1.0 } else { r });
            }
        }
        start += size;
    }
    debug_assert_eq!(start, p);
    m
}

/// Overall dependence strength of a correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceSummary {
    /// `||Sigma||_1 = sum_ij |sigma_ij|`.
    pub sigma_l1: f64,
    /// `||Sigma||_1 / p^2`.
    pub rho_bar: f64,
    /// `-ln(rho_bar) / ln(p)`, clamped to `[0, 1]`.
    pub eta: f64,
    /// The unclamped value, kept for diagnostics.
    pub eta_raw: f64,
}

/// Computes `||Sigma||_1`, `rho_bar`, and `eta` with compensated summation.
pub fn dependence_summary(sigma: &DenseMatrix) -> DependenceSummary {
    let p = sigma.rows() as f64;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in sigma.entries() {
        let y = v.abs() - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    let rho_bar = sum / (p * p);
    let eta_raw = -rho_bar.ln() / p.ln();
    DependenceSummary { sigma_l1: sum, rho_bar, eta: eta_raw.clamp(0.0, 1.0), eta_raw }
}

/// Where the positive-part clamp sits in the `mu_2` formula.
///
/// The displayed formula clamps `(4 gamma - 2 eta)` inside the square root;
/// the reported numeric boundary values are only reproduced when the whole
/// radicand is clamped at zero instead. The outer clamp is therefore the
/// default and the inner variant stays available behind this flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mu2Clamp {
    #[default]
    Outer,
    Inner,
}

/// The consistency boundaries for FNP estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryBoundaries {
    pub mu1: f64,
    pub mu2: f64,
    pub mu_min: f64,
    pub gamma: f64,
    pub eta: f64,
    pub p: usize,
}

/// Computes `mu_1 = sqrt(2 gamma ln p)`,
/// `mu_2 = sqrt((4 gamma - 2 eta) ln p + 4 ln ln p)` under the chosen clamp,
/// and their minimum. Natural logarithms throughout.
pub fn theory_boundaries(gamma: f64, eta: f64, p: usize, clamp: Mu2Clamp) -> Result<TheoryBoundaries> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("eta must lie in [0, 1], got {eta}")));
    }
    if p < 3 {
        return Err(Error::Domain(format!("p must be at least 3, got {p}")));
    }
    let ln_p = (p as f64).ln();
    let ln_ln_p = ln_p.ln();
    let mu1 = (2.0 * gamma * ln_p).sqrt();
    let mu2 = match clamp {
        Mu2Clamp::Outer => ((4.0 * gamma - 2.0 * eta) * ln_p + 4.0 * ln_ln_p).max(0.0).sqrt(),
        Mu2Clamp::Inner => ((4.0 * gamma - 2.0 * eta).max(0.0) * ln_p + 4.0 * ln_ln_p).sqrt(),
    };
    Ok(TheoryBoundaries { mu1, mu2, mu_min: mu1.min(mu2), gamma, eta, p })
}

/// Lower boundary of the dual-control region in the phase diagram:
/// `min(gamma, 2 gamma - eta)`. May be negative, in which case any positive
/// signal scale lies above it.
pub fn phase_boundary(gamma: f64, eta: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("eta must lie in [0, 1], got {eta}")));
    }
    Ok(gamma.min(2.0 * gamma - eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::cholesky;

    fn rng() -> RngStream {
        RngStream::new(7, 0)
    }

    #[test]
    fn identity_builds_identity() {
        let m = build_covariance(&CovarianceSpec::Identity, 4, &mut rng()).unwrap();
        assert_eq!(m, DenseMatrix::identity(4));
    }

    #[test]
    fn autoregressive_powers() {
        let spec = CovarianceSpec::Autoregressive { lambda: 0.2 };
        let m = build_covariance(&spec, 3, &mut rng()).unwrap();
        let expected = [1.0, 0.2, 0.04, 0.2, 1.0, 0.2, 0.04, 0.2, 1.0];
        for (got, want) in m.entries().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn block_is_block_diagonal() {
        let spec = CovarianceSpec::Block { block_size: 2, within_corr: 0.5 };
        let m = build_covariance(&spec, 4, &mut rng()).unwrap();
        let expected = [
            1.0, 0.5, 0.0, 0.0, //
            0.5, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.5, //
            0.0, 0.0, 0.5, 1.0,
        ];
        assert_eq!(m.entries(), &expected);
    }

    #[test]
    fn block_truncates_last_block() {
        let spec = CovarianceSpec::Block { block_size: 3, within_corr: 0.4 };
        let m = build_covariance(&spec, 5, &mut rng()).unwrap();
        assert_eq!(m.get(3, 4), 0.4);
        assert_eq!(m.get(2, 3), 0.0);
        assert_eq!(m.get(4, 4), 1.0);
    }

    #[test]
    fn random_block_covers_p_and_is_reproducible() {
        let spec = CovarianceSpec::RandomBlock { min_size: 2, max_size: 5, within_corr: 0.5 };
        let a = build_covariance(&spec, 23, &mut RngStream::new(3, 0)).unwrap();
        let b = build_covariance(&spec, 23, &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(a, b);
        for i in 0..23 {
            assert_eq!(a.get(i, i), 1.0);
        }
    }

    #[test]
    fn factor_is_unit_diagonal_and_seed_frozen() {
        let spec = CovarianceSpec::Factor { tau: 0.5, h_seed: 11 };
        let a = build_covariance(&spec, 16, &mut RngStream::new(1, 0)).unwrap();
        let b = build_covariance(&spec, 16, &mut RngStream::new(999, 7)).unwrap();
        assert_eq!(a, b, "factor matrix must depend only on h_seed");
        for i in 0..16 {
            assert_eq!(a.get(i, i), 1.0);
        }
        assert!(a.max_asymmetry() == 0.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut r = rng();
        assert!(build_covariance(&CovarianceSpec::Autoregressive { lambda: 1.0 }, 4, &mut r).is_err());
        assert!(build_covariance(&CovarianceSpec::Block { block_size: 9, within_corr: 0.5 }, 4, &mut r).is_err());
        assert!(build_covariance(&CovarianceSpec::Block { block_size: 2, within_corr: 1.0 }, 4, &mut r).is_err());
        assert!(build_covariance(&CovarianceSpec::RandomBlock { min_size: 3, max_size: 2, within_corr: 0.5 }, 4, &mut r).is_err());
        assert!(build_covariance(&CovarianceSpec::Factor { tau: 1.5, h_seed: 0 }, 4, &mut r).is_err());
    }

    #[test]
    fn all_variants_are_positive_definite() {
        let specs = [
            CovarianceSpec::Identity,
            CovarianceSpec::Autoregressive { lambda: 0.2 },
            CovarianceSpec::Autoregressive { lambda: -0.7 },
            CovarianceSpec::Block { block_size: 40, within_corr: 0.5 },
            CovarianceSpec::RandomBlock { min_size: 10, max_size: 100, within_corr: 0.5 },
            CovarianceSpec::Factor { tau: 0.5, h_seed: 421 },
        ];
        for spec in specs {
            let m = build_covariance(&spec, 300, &mut RngStream::new(5, 0)).unwrap();
            assert!(cholesky(&m).is_ok(), "{spec:?} not positive definite");
        }
    }

    #[test]
    fn identity_dependence_summary_is_independent_endpoint() {
        for p in [4usize, 64, 500] {
            let s = dependence_summary(&DenseMatrix::identity(p));
            assert_eq!(s.sigma_l1, p as f64);
            assert!((s.rho_bar - 1.0 / p as f64).abs() < 1e-15);
            assert!((s.eta - 1.0).abs() < 1e-12, "eta = {} at p = {p}", s.eta);
        }
    }

    #[test]
    fn autoregressive_summary_matches_closed_form() {
        // ||Sigma||_1 = p + 2 sum_d (p - d) lambda^d for lambda > 0.
        let p = 2000;
        let m = build_covariance(&CovarianceSpec::Autoregressive { lambda: 0.2 }, p, &mut rng()).unwrap();
        let s = dependence_summary(&m);
        assert!((s.sigma_l1 - 2999.375).abs() < 0.01, "sigma_l1 = {}", s.sigma_l1);
        assert!((s.rho_bar - 7.4984375e-4).abs() < 1e-8);
        assert!((s.eta - 0.9466830741).abs() < 1e-6, "eta = {}", s.eta);
    }

    #[test]
    fn block_summary_matches_hand_count() {
        // 50 blocks, each 40 + 40*39*0.5 = 820 in absolute sum.
        let p = 2000;
        let m = build_covariance(&CovarianceSpec::Block { block_size: 40, within_corr: 0.5 }, p, &mut rng()).unwrap();
        let s = dependence_summary(&m);
        assert!((s.sigma_l1 - 41_000.0).abs() < 1e-6);
        assert!((s.rho_bar - 0.01025).abs() < 1e-12);
        assert!((s.eta - 0.6026228593).abs() < 1e-6);
    }

    #[test]
    fn eta_decreases_as_rho_bar_increases() {
        let p = 200;
        let mut last_rho = 0.0;
        let mut last_eta = f64::INFINITY;
        for r in [0.0, 0.2, 0.5, 0.8] {
            let m = build_covariance(&CovarianceSpec::Block { block_size: 20, within_corr: r }, p, &mut rng()).unwrap();
            let s = dependence_summary(&m);
            assert!(s.rho_bar > last_rho);
            assert!(s.eta <= last_eta, "eta must not increase with rho_bar");
            last_rho = s.rho_bar;
            last_eta = s.eta;
        }
    }

    #[test]
    fn boundaries_match_reported_values() {
        let b = theory_boundaries(0.3, 0.95, 2000, Mu2Clamp::Outer).unwrap();
        assert!((b.mu1 - 2.1355424313).abs() < 1e-9);
        assert!((b.mu2 - 1.6710584125).abs() < 1e-9);
        assert_eq!(b.mu_min, b.mu2);

        let b = theory_boundaries(0.3, 0.57, 2000, Mu2Clamp::Outer).unwrap();
        assert!((b.mu2 - 2.9273062852).abs() < 1e-9);
        assert_eq!(b.mu_min, b.mu1);

        let b = theory_boundaries(0.3, 0.23, 2000, Mu2Clamp::Outer).unwrap();
        assert!((b.mu2 - 3.7064451648).abs() < 1e-9);
    }

    #[test]
    fn inner_clamp_differs_when_radicand_is_negative() {
        let outer = theory_boundaries(0.3, 0.95, 2000, Mu2Clamp::Outer).unwrap();
        let inner = theory_boundaries(0.3, 0.95, 2000, Mu2Clamp::Inner).unwrap();
        assert!((inner.mu2 - 2.8483447719).abs() < 1e-9);
        assert!(outer.mu2 < inner.mu2);
    }

    #[test]
    fn mu_min_is_mu2_in_weak_dependence_grid() {
        // With eta = 1 and (4g - 2) ln p + 4 ln ln p < 2g ln p, mu2 < mu1.
        for p in [100usize, 2000, 100_000] {
            for gamma in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let ln_p = (p as f64).ln();
                let lhs = (4.0 * gamma - 2.0) * ln_p + 4.0 * ln_p.ln();
                if lhs < 2.0 * gamma * ln_p {
                    let b = theory_boundaries(gamma, 1.0, p, Mu2Clamp::Outer).unwrap();
                    assert_eq!(b.mu_min, b.mu2, "gamma={gamma}, p={p}");
                }
            }
        }
    }

    #[test]
    fn boundary_domain_errors() {
        assert!(theory_boundaries(0.0, 0.5, 2000, Mu2Clamp::Outer).is_err());
        assert!(theory_boundaries(0.5, 1.5, 2000, Mu2Clamp::Outer).is_err());
        assert!(theory_boundaries(0.5, 0.5, 2, Mu2Clamp::Outer).is_err());
    }

    #[test]
    fn phase_boundary_values() {
        assert_eq!(phase_boundary(0.75, 1.0).unwrap(), 0.5);
        assert!((phase_boundary(0.3, 0.95).unwrap() - (-0.35)).abs() < 1e-15);
        assert_eq!(phase_boundary(0.5, 1.0).unwrap(), 0.0);
    }
}
