//! Signal-proportion estimation.
//!
//! The estimator compares the empirical exceedance curve of the order
//! statistics against the null survival function and keeps the largest
//! certified gap:
//!
//! ```text
//! pi_d = max_j [ j/p - sf(z_(j)) - c_{p,d} * d(sf(z_(j))) ] / [ 1 - sf(z_(j)) ]
//! ```
//!
//! for the two exponents `d(u) = sqrt(u)` and `d(u) = u`, with
//! `pi_hat = max{pi_0.5, pi_1}`. The bounding sequences `c_{p,0.5}` and
//! `c_{p,1}` are Monte-Carlo quantiles of the corresponding maximal null
//! deviations, taken at level `1 - 1/sqrt(ln p)`; they keep the estimate a
//! lower bound for the true proportion with high probability.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depmodels::{build_covariance, CovarianceSpec};
use crate::error::{Error, Result};
use crate::fmt::{creation_timestamp, read_text, round_sig10, write_text};
use crate::fnpcontrol::StatVector;
use crate::numcore::{cholesky, mvn_sample, normal_sf, rng::derive_seed, RngStream};

/// Survival values are floored here inside the V statistics and estimator
/// denominators so extreme order statistics cannot produce infinities.
pub const SF_FLOOR: f64 = 1e-300;

/// Default number of Monte-Carlo null draws for a calibration.
pub const DEFAULT_CALIBRATION_DRAWS: usize = 500;

/// Stream tag separating covariance construction from the per-draw streams.
const COVARIANCE_SEED_TAG: u64 = 0xC0;

/// A validated reference to an `N x p` matrix of null statistics on disk,
/// one draw per row. Typically produced externally, e.g. by permuting a
/// response variable and recomputing test statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalNullMatrix {
    pub path: String,
    pub n_rows: usize,
    pub p: usize,
}

/// Where calibration null draws come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullSource {
    IndependentGaussian,
    Covariance { spec: CovarianceSpec },
    ExternalMatrix { matrix: ExternalNullMatrix },
}

/// Bounding-sequence pair with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullCalibration {
    pub p: usize,
    pub n_draws: usize,
    pub c_p_05: f64,
    pub c_p_1: f64,
    pub null_source: NullSource,
    pub master_seed: u64,
}

impl NullCalibration {
    /// The quantile level used for the bounding sequences,
    /// `1 - 1/sqrt(ln p)`.
    pub fn quantile_level(&self) -> f64 {
        quantile_level(self.p)
    }
}

pub fn quantile_level(p: usize) -> f64 {
    1.0 - 1.0 / (p as f64).ln().sqrt()
}

/// Validates and registers an external null z-matrix file.
///
/// Every row must hold exactly `expected_p` finite values; rows are draws.
pub fn register_null_matrix(path: &Path, expected_p: usize) -> Result<ExternalNullMatrix> {
    let rows = read_matrix_file(path)?;
    if rows.is_empty() {
        return Err(Error::InvalidNullMatrix(format!("{}: no rows", path.display())));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != expected_p {
            return Err(Error::InvalidNullMatrix(format!(
                "{}: row {} has width {}, expected {expected_p}",
                path.display(),
                i + 1,
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidNullMatrix(format!(
                "{}: non-finite entry in row {}",
                path.display(),
                i + 1
            )));
        }
    }
    Ok(ExternalNullMatrix {
        path: path.to_string_lossy().into_owned(),
        n_rows: rows.len(),
        p: expected_p,
    })
}

/// Reads a whitespace/comma-delimited numeric matrix, one row per line.
pub fn read_matrix_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let content = read_text(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line
            .split([',', ' ', '\t'])
            .filter(|t| !t.is_empty())
            .map(str::parse::<f64>)
            .collect();
        rows.push(row.map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?);
    }
    Ok(rows)
}

/// The two maximal-deviation statistics of one null draw.
fn v_statistics(draw: &mut [f64]) -> (f64, f64) {
    draw.sort_by(|a, b| b.total_cmp(a));
    let p = draw.len() as f64;
    let mut v05 = 0.0f64;
    let mut v1 = 0.0f64;
    for (rank0, &w) in draw.iter().enumerate() {
        let sf = normal_sf(w).max(SF_FLOOR);
        let dev = ((rank0 + 1) as f64 / p - sf).abs();
        v05 = v05.max(dev / sf.sqrt());
        v1 = v1.max(dev / sf);
    }
    (v05, v1)
}

/// Nearest-rank empirical quantile: the value at rank `ceil(q n)` of the
/// ascending sample.
fn nearest_rank_quantile(sorted_ascending: &[f64], q: f64) -> f64 {
    let n = sorted_ascending.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted_ascending[rank.clamp(1, n) - 1]
}

/// Computes the bounding sequences `c_{p,0.5}` and `c_{p,1}` from `n_draws`
/// Monte-Carlo draws of the joint null distribution.
///
/// Draw `a` uses the stream `(master_seed, a)`, so the result is independent
/// of how the draws are scheduled across threads.
pub fn calibrate(
    p: usize,
    n_draws: usize,
    source: &NullSource,
    master_seed: u64,
) -> Result<NullCalibration> {
    if p < 3 {
        return Err(Error::Domain(format!("calibration needs p >= 3 so ln p > 1, got {p}")));
    }
    if n_draws == 0 {
        return Err(Error::Domain("calibration needs at least one draw".into()));
    }
    let stats: Vec<(f64, f64)> = match source {
        NullSource::IndependentGaussian => (0..n_draws)
            .into_par_iter()
            .map(|a| {
                let mut rng = RngStream::new(master_seed, a as u64);
                let mut draw = vec![0.0; p];
                rng.fill_standard_normal(&mut draw);
                v_statistics(&mut draw)
            })
            .collect(),
        NullSource::Covariance { spec } => {
            let mut cov_rng = RngStream::new(derive_seed(master_seed, COVARIANCE_SEED_TAG), 0);
            let sigma = build_covariance(spec, p, &mut cov_rng)?;
            let factor = cholesky(&sigma)?;
            let mean = vec![0.0; p];
            (0..n_draws)
                .into_par_iter()
                .map(|a| {
                    let mut rng = RngStream::new(master_seed, a as u64);
                    let mut draw = mvn_sample(&factor, &mean, &mut rng).expect("mean length matches");
                    v_statistics(&mut draw)
                })
                .collect()
        }
        NullSource::ExternalMatrix { matrix } => {
            if matrix.p != p {
                return Err(Error::SizeMismatch { expected: p, got: matrix.p });
            }
            let rows = read_matrix_file(Path::new(&matrix.path))?;
            if rows.len() != n_draws {
                return Err(Error::InvalidNullMatrix(format!(
                    "{}: has {} rows, calibration asked for {n_draws}",
                    matrix.path,
                    rows.len()
                )));
            }
            rows.into_par_iter()
                .map(|mut row| {
                    if row.len() != p {
                        return Err(Error::InvalidNullMatrix(format!(
                            "row width {} does not match p = {p}",
                            row.len()
                        )));
                    }
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidNullMatrix("non-finite entry".into()));
                    }
                    Ok(v_statistics(&mut row))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let mut v05: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let mut v1: Vec<f64> = stats.iter().map(|s| s.1).collect();
    v05.sort_by(f64::total_cmp);
    v1.sort_by(f64::total_cmp);
    let q = quantile_level(p);
    Ok(NullCalibration {
        p,
        n_draws,
        c_p_05: nearest_rank_quantile(&v05, q),
        c_p_1: nearest_rank_quantile(&v1, q),
        null_source: source.clone(),
        master_seed,
    })
}

/// The two per-exponent estimates and their maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    /// Pre-clamp value for the sqrt exponent.
    pub pi_05: f64,
    /// Pre-clamp value for the linear exponent.
    pub pi_1: f64,
    /// `max(pi_05, pi_1)` clamped to `[0, 1]`.
    pub pi_hat: f64,
    /// 1-based rank attaining `pi_05`.
    pub argmax_rank_05: usize,
    /// 1-based rank attaining `pi_1`.
    pub argmax_rank_1: usize,
}

/// Estimates the signal proportion from the ranked statistics.
///
/// Two-sided vectors rank by `|z|` with the two-sided null survival in place
/// of `sf`; the per-exponent maxima are kept unclamped for diagnostics.
pub fn estimate_pi(stats: &StatVector, calibration: &NullCalibration) -> Result<ProportionEstimate> {
    if stats.len() != calibration.p {
        return Err(Error::SizeMismatch { expected: calibration.p, got: stats.len() });
    }
    let p = stats.len() as f64;
    let order = stats.order_descending();
    let mut pi_05 = f64::NEG_INFINITY;
    let mut pi_1 = f64::NEG_INFINITY;
    let mut argmax_05 = 1usize;
    let mut argmax_1 = 1usize;
    for (rank0, &j) in order.iter().enumerate() {
        let sf = stats.null_sf(stats.value(j)).max(SF_FLOOR);
        let denom = (1.0 - sf).max(1e-16);
        let lead = (rank0 + 1) as f64 / p - sf;
        let t05 = (lead - calibration.c_p_05 * sf.sqrt()) / denom;
        let t1 = (lead - calibration.c_p_1 * sf) / denom;
        if t05 > pi_05 {
            pi_05 = t05;
            argmax_05 = rank0 + 1;
        }
        if t1 > pi_1 {
            pi_1 = t1;
            argmax_1 = rank0 + 1;
        }
    }
    Ok(ProportionEstimate {
        pi_05,
        pi_1,
        pi_hat: pi_05.max(pi_1).clamp(0.0, 1.0),
        argmax_rank_05: argmax_05,
        argmax_rank_1: argmax_1,
    })
}

/// On-disk calibration format: the calibration fields plus a format version
/// and creation timestamp, so expensive calibrations can be reused across
/// runs.
pub const CALIBRATION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationFile {
    format_version: u32,
    created_at: String,
    #[serde(flatten)]
    calibration: NullCalibration,
}

/// Writes a calibration as versioned JSON. Floats are rounded to 10
/// significant digits; the timestamp honors `SOURCE_DATE_EPOCH`.
pub fn save_calibration(calibration: &NullCalibration, path: &Path) -> Result<()> {
    let mut rounded = calibration.clone();
    rounded.c_p_05 = round_sig10(rounded.c_p_05);
    rounded.c_p_1 = round_sig10(rounded.c_p_1);
    let file = CalibrationFile {
        format_version: CALIBRATION_FORMAT_VERSION,
        created_at: creation_timestamp(),
        calibration: rounded,
    };
    let mut body = serde_json::to_string_pretty(&file).expect("calibration serializes");
    body.push('\n');
    write_text(path, &body)
}

pub fn load_calibration(path: &Path) -> Result<NullCalibration> {
    let content = read_text(path)?;
    let file: CalibrationFile =
        serde_json::from_str(&content).map_err(|e| Error::parse(path, e.to_string()))?;
    if file.format_version != CALIBRATION_FORMAT_VERSION {
        return Err(Error::parse(
            path,
            format!(
                "unsupported calibration format version {} (expected {CALIBRATION_FORMAT_VERSION})",
                file.format_version
            ),
        ));
    }
    Ok(file.calibration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnpcontrol::Sidedness;

    #[test]
    fn quantile_level_example() {
        assert!((quantile_level(2000) - 0.6373).abs() < 1e-4);
    }

    #[test]
    fn single_draw_quantile_is_that_draw() {
        let calib = calibrate(50, 1, &NullSource::IndependentGaussian, 9).unwrap();
        // Recompute the V statistics of the single draw straight from the
        // published formula.
        let mut draw = vec![0.0; 50];
        RngStream::new(9, 0).fill_standard_normal(&mut draw);
        draw.sort_by(|a, b| b.total_cmp(a));
        let (mut v05, mut v1) = (0.0f64, 0.0f64);
        for (i, &w) in draw.iter().enumerate() {
            let sf = normal_sf(w);
            let dev = ((i + 1) as f64 / 50.0 - sf).abs();
            v05 = v05.max(dev / sf.sqrt());
            v1 = v1.max(dev / sf);
        }
        assert_eq!(calib.c_p_05, v05);
        assert_eq!(calib.c_p_1, v1);
    }

    #[test]
    fn calibration_is_bit_exact_across_runs() {
        let a = calibrate(200, 60, &NullSource::IndependentGaussian, 7).unwrap();
        let b = calibrate(200, 60, &NullSource::IndependentGaussian, 7).unwrap();
        assert_eq!(a.c_p_05.to_bits(), b.c_p_05.to_bits());
        assert_eq!(a.c_p_1.to_bits(), b.c_p_1.to_bits());
        let c = calibrate(200, 60, &NullSource::IndependentGaussian, 8).unwrap();
        assert_ne!(a.c_p_05.to_bits(), c.c_p_05.to_bits());
    }

    #[test]
    fn calibration_under_covariance_null_is_reproducible() {
        let source = NullSource::Covariance {
            spec: CovarianceSpec::Autoregressive { lambda: 0.2 },
        };
        let a = calibrate(100, 40, &source, 3).unwrap();
        let b = calibrate(100, 40, &source, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_domain_checks() {
        assert!(calibrate(2, 10, &NullSource::IndependentGaussian, 0).is_err());
        assert!(calibrate(100, 0, &NullSource::IndependentGaussian, 0).is_err());
    }

    fn pure_null_stats(p: usize, seed: u64, stream: u64) -> StatVector {
        let mut rng = RngStream::new(seed, stream);
        let mut z = vec![0.0; p];
        rng.fill_standard_normal(&mut z);
        StatVector::new(z, None, Sidedness::OneSided).unwrap()
    }

    #[test]
    fn saturated_signal_estimate_is_near_one() {
        let calib = calibrate(300, 120, &NullSource::IndependentGaussian, 5).unwrap();
        let sv = StatVector::new(vec![10.0; 300], None, Sidedness::OneSided).unwrap();
        let est = estimate_pi(&sv, &calib).unwrap();
        assert!(est.pi_hat >= 0.99, "pi_hat = {}", est.pi_hat);
    }

    #[test]
    fn pure_null_exceedance_respects_the_bounding_level() {
        // Lower-bound property, per exponent: under the null, each pre-clamp
        // estimate exceeds 0 no more often than (1 - quantile level) plus
        // Monte-Carlo slack, because {pi_d > 0} implies {V_d > c_d}.
        let p = 400;
        let calib = calibrate(p, 200, &NullSource::IndependentGaussian, 31).unwrap();
        let reps = 200;
        let (mut exceed_05, mut exceed_1, mut zeros) = (0, 0, 0);
        for r in 0..reps {
            // Replication streams disjoint from the calibration's.
            let sv = pure_null_stats(p, derive_seed(31, 0xFEED), r);
            let est = estimate_pi(&sv, &calib).unwrap();
            if est.pi_05 > 0.0 {
                exceed_05 += 1;
            }
            if est.pi_1 > 0.0 {
                exceed_1 += 1;
            }
            if est.pi_hat == 0.0 {
                zeros += 1;
            }
        }
        let bound = ((1.0 - calib.quantile_level()) + 0.08) * reps as f64;
        assert!((exceed_05 as f64) <= bound, "pi_05 exceeded 0 in {exceed_05}/{reps}");
        assert!((exceed_1 as f64) <= bound, "pi_1 exceeded 0 in {exceed_1}/{reps}");
        // The joint zero frequency is lower than either marginal, but still
        // close to half under the null.
        assert!(zeros as f64 >= 0.40 * reps as f64, "only {zeros}/{reps} were zero");
    }

    #[test]
    fn strengthening_signals_never_lowers_the_estimate() {
        let p = 300;
        let calib = calibrate(p, 100, &NullSource::IndependentGaussian, 13).unwrap();
        for r in 0..20 {
            let mut rng = RngStream::new(99, r);
            let mut noise = vec![0.0; p];
            rng.fill_standard_normal(&mut noise);
            let signals: Vec<usize> = (0..30).map(|i| i * 10).collect();
            let mut last = f64::NEG_INFINITY;
            for bump in [0.0, 0.5, 1.0, 2.0, 4.0] {
                let mut z = noise.clone();
                for &j in &signals {
                    z[j] += bump;
                }
                let sv = StatVector::new(z, None, Sidedness::OneSided).unwrap();
                let est = estimate_pi(&sv, &calib).unwrap();
                assert!(est.pi_hat >= last, "pi_hat fell when signals strengthened");
                last = est.pi_hat;
            }
        }
    }

    #[test]
    fn extreme_statistics_stay_finite() {
        let p = 100;
        let calib = calibrate(p, 50, &NullSource::IndependentGaussian, 2).unwrap();
        let mut z = vec![0.0; p];
        z[0] = 38.0;
        z[1] = -38.0;
        let sv = StatVector::new(z, None, Sidedness::OneSided).unwrap();
        let est = estimate_pi(&sv, &calib).unwrap();
        assert!(est.pi_hat.is_finite());
        assert!(est.pi_05.is_finite() || est.pi_05 == f64::NEG_INFINITY);
        assert!((0.0..=1.0).contains(&est.pi_hat));
    }

    #[test]
    fn estimate_is_deterministic() {
        let p = 150;
        let calib = calibrate(p, 80, &NullSource::IndependentGaussian, 21).unwrap();
        let sv = pure_null_stats(p, 77, 0);
        let a = estimate_pi(&sv, &calib).unwrap();
        let b = estimate_pi(&sv, &calib).unwrap();
        assert_eq!(a, b);
        assert!(a.argmax_rank_05 >= 1 && a.argmax_rank_05 <= p);
        assert!(a.argmax_rank_1 >= 1 && a.argmax_rank_1 <= p);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let calib = calibrate(100, 10, &NullSource::IndependentGaussian, 0).unwrap();
        let sv = pure_null_stats(99, 0, 0);
        assert!(matches!(
            estimate_pi(&sv, &calib),
            Err(Error::SizeMismatch { expected: 100, got: 99 })
        ));
    }

    #[test]
    fn external_matrix_validation() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.txt");
        std::fs::write(&good, "0.1 0.2 0.3\n-0.4 0.5 -0.6\n").unwrap();
        let m = register_null_matrix(&good, 3).unwrap();
        assert_eq!((m.n_rows, m.p), (2, 3));

        assert!(matches!(register_null_matrix(&good, 4), Err(Error::InvalidNullMatrix(_))));

        let nan = dir.path().join("nan.txt");
        std::fs::write(&nan, "0.1 nan 0.3\n").unwrap();
        assert!(matches!(register_null_matrix(&nan, 3), Err(Error::InvalidNullMatrix(_))));
    }

    #[test]
    fn external_matrix_drives_calibration() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("null.txt");
        let mut rows = String::new();
        let mut rng = RngStream::new(15, 0);
        for _ in 0..20 {
            let row: Vec<String> = (0..40).map(|_| format!("{}", rng.standard_normal())).collect();
            rows.push_str(&row.join(" "));
            rows.push('\n');
        }
        std::fs::write(&path, rows).unwrap();
        let matrix = register_null_matrix(&path, 40).unwrap();
        let calib = calibrate(40, 20, &NullSource::ExternalMatrix { matrix: matrix.clone() }, 0).unwrap();
        assert!(calib.c_p_05 > 0.0 && calib.c_p_1 > 0.0);
        // Draw-count mismatch is rejected.
        assert!(calibrate(40, 21, &NullSource::ExternalMatrix { matrix }, 0).is_err());
    }

    #[test]
    fn calibration_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calib.json");
        let calib = calibrate(120, 50, &NullSource::IndependentGaussian, 4).unwrap();
        save_calibration(&calib, &path).unwrap();
        let loaded = load_calibration(&path).unwrap();
        assert_eq!(loaded.p, calib.p);
        assert_eq!(loaded.n_draws, calib.n_draws);
        assert_eq!(loaded.master_seed, calib.master_seed);
        assert_eq!(loaded.c_p_05, round_sig10(calib.c_p_05));

        // Unsupported versions are refused.
        let content = std::fs::read_to_string(&path).unwrap().replace(
            "\"format_version\": 1",
            "\"format_version\": 99",
        );
        std::fs::write(&path, content).unwrap();
        assert!(load_calibration(&path).is_err());
    }
}
