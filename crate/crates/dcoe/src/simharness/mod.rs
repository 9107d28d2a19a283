//! Declarative experiment specifications and the replication driver.
//!
//! Replication `r` of an experiment always draws from the stream
//! `(master_seed, r)`; the covariance matrix and the null calibration get
//! their own derived seeds. Shared state (the Cholesky factor, the
//! calibration) is immutable, and aggregation reduces over replication
//! index, so results are identical for any worker count.

pub mod consistency;
pub mod grid;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bh_fdr_select, evaluate, MetricRow};
use crate::depmodels::{build_covariance, CovarianceSpec};
use crate::error::{Error, Result};
use crate::fmt::{fmt_float, read_text, write_text};
use crate::fnpcontrol::{dcoe_select, dcoe_select_estimated, SSource, Sidedness, StatVector};
use crate::numcore::{cholesky, derive_seed, mvn_sample, CholeskyFactor, DenseMatrix, RngStream};
use crate::proportion::{calibrate, NullCalibration, NullSource, DEFAULT_CALIBRATION_DRAWS};

const COVARIANCE_SEED_TAG: u64 = 0x5167;
const CALIBRATION_SEED_TAG: u64 = 0xCA11;

/// Per-signal mean elevation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalStrength {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl SignalStrength {
    fn validate(&self) -> Result<()> {
        match *self {
            SignalStrength::Constant { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::Domain(format!("signal strength must be positive, got {value}")));
                }
            }
            SignalStrength::Uniform { lo, hi } => {
                if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                    return Err(Error::Domain(format!(
                        "uniform signal strength needs 0 < lo < hi, got [{lo}, {hi})"
                    )));
                }
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut RngStream) -> f64 {
        match *self {
            SignalStrength::Constant { value } => value,
            SignalStrength::Uniform { lo, hi } => rng.uniform(lo, hi),
        }
    }
}

/// A selection method to run on each replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodSpec {
    Dcoe { beta: f64, s_source: SSource },
    Bh { alpha: f64 },
}

impl MethodSpec {
    /// Stable, comma-free label used in result tables and file names.
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Dcoe { beta, s_source: SSource::Known } => format!("DCOE(beta={beta})"),
            MethodSpec::Dcoe { beta, s_source: SSource::Estimated } => {
                format!("DCOE-est(beta={beta})")
            }
            MethodSpec::Bh { alpha } => format!("BH(alpha={alpha})"),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            MethodSpec::Dcoe { beta, .. } => {
                if !(beta > 0.0 && beta < 1.0) {
                    return Err(Error::InvalidBeta(beta));
                }
            }
            MethodSpec::Bh { alpha } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::InvalidAlpha(alpha));
                }
            }
        }
        Ok(())
    }

    fn needs_calibration(&self) -> bool {
        matches!(self, MethodSpec::Dcoe { s_source: SSource::Estimated, .. })
    }
}

/// Replication-level configuration of a one-dimensional experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub p: usize,
    /// Sparsity exponent: the signal count is `round(p^(1 - gamma))`.
    pub gamma: f64,
    pub signal_strength: SignalStrength,
    pub covariance: CovarianceSpec,
    pub methods: Vec<MethodSpec>,
    pub n_replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub sidedness: Sidedness,
}

impl ExperimentSpec {
    /// `s = round(p^(1 - gamma))`, at least 1.
    pub fn signal_count(&self) -> usize {
        ((self.p as f64).powf(1.0 - self.gamma).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 3 {
            return Err(Error::Domain(format!("p must be at least 3, got {}", self.p)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Domain(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        self.signal_strength.validate()?;
        self.covariance.validate(self.p)?;
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("experiment needs at least one method".into()));
        }
        for m in &self.methods {
            m.validate()?;
        }
        if self.n_replications == 0 {
            return Err(Error::Domain("n_replications must be at least 1".into()));
        }
        if self.signal_count() > self.p {
            return Err(Error::Domain("signal count exceeds dimension".into()));
        }
        Ok(())
    }
}

/// Loads an [`ExperimentSpec`] from a JSON or TOML file (by extension).
pub fn load_experiment_spec(path: &Path) -> Result<ExperimentSpec> {
    load_config(path)
}

/// Loads any config type from a JSON or TOML file (by extension).
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let content = read_text(path)?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&content).map_err(|e| Error::parse(path, e.to_string()))
    } else {
        serde_json::from_str(&content).map_err(|e| Error::parse(path, e.to_string()))
    }
}

/// Prepared, replication-invariant state of an experiment: the materialized
/// covariance, its Cholesky factor (computed once and shared read-only), the
/// signal count, and the calibration when any method estimates `s`.
pub struct ExperimentContext {
    pub spec: ExperimentSpec,
    pub sigma: DenseMatrix,
    pub factor: CholeskyFactor,
    pub s: usize,
    pub calibration: Option<NullCalibration>,
}

impl ExperimentContext {
    pub fn prepare(spec: &ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let mut cov_rng =
            RngStream::new(derive_seed(spec.master_seed, COVARIANCE_SEED_TAG), 0);
        let sigma = build_covariance(&spec.covariance, spec.p, &mut cov_rng)?;
        let factor = cholesky(&sigma)?;
        let calibration = if spec.methods.iter().any(MethodSpec::needs_calibration) {
            // The joint null for calibration uses the same covariance model
            // as the analysis, which is available in simulation mode.
            Some(calibrate(
                spec.p,
                DEFAULT_CALIBRATION_DRAWS,
                &NullSource::Covariance { spec: spec.covariance.clone() },
                derive_seed(spec.master_seed, CALIBRATION_SEED_TAG),
            )?)
        } else {
            None
        };
        Ok(ExperimentContext { spec: spec.clone(), sigma, factor, s: spec.signal_count(), calibration })
    }

    /// Draws replication `r`: the signal index set (uniform without
    /// replacement), the per-signal strengths, and `z ~ N(mu, Sigma)`.
    pub fn stats_for_replication(&self, r: usize) -> Result<StatVector> {
        let p = self.spec.p;
        let mut rng = RngStream::new(self.spec.master_seed, r as u64);
        let signal_indices = rng.sample_indices(p, self.s);
        let mut mean = vec![0.0; p];
        for &j in &signal_indices {
            mean[j] = self.spec.signal_strength.draw(&mut rng);
        }
        let z = mvn_sample(&self.factor, &mean, &mut rng)?;
        StatVector::new(z, Some(signal_indices.into_iter().collect()), self.spec.sidedness)
    }

    /// Runs one method on one replication's statistics.
    pub fn run_method(&self, method: &MethodSpec, stats: &StatVector) -> Result<MetricRow> {
        let selected: BTreeSet<usize> = match method {
            MethodSpec::Dcoe { beta, s_source: SSource::Known } => {
                dcoe_select(stats, *beta, self.s as f64)?.selected_set()
            }
            MethodSpec::Dcoe { beta, s_source: SSource::Estimated } => {
                let calibration = self
                    .calibration
                    .as_ref()
                    .expect("calibration prepared for estimated-s methods");
                dcoe_select_estimated(stats, *beta, calibration)?.selected_set()
            }
            MethodSpec::Bh { alpha } => bh_fdr_select(stats, *alpha)?,
        };
        evaluate(&selected, stats, &method.label())
    }
}

/// Realized metrics of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub metric: MetricRow,
}

/// Mean and standard deviation of each metric over the replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_fnp: f64,
    pub sd_fnp: f64,
    pub mean_fdp: f64,
    pub sd_fdp: f64,
    pub mean_fm: f64,
    pub sd_fm: f64,
}

/// Everything a finished experiment produced.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub summaries: Vec<MethodSummary>,
    /// Replication-major raw rows: `n_replications * |methods|` of them.
    pub replications: Vec<ReplicationRow>,
    pub wall_time_secs: f64,
}

impl ExperimentResult {
    pub fn summary_for(&self, label: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == label)
    }

    /// Summary table CSV: `method,mean_fnp,sd_fnp,mean_fdp,sd_fdp,mean_fm,sd_fm`.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("method,mean_fnp,sd_fnp,mean_fdp,sd_fdp,mean_fm,sd_fm\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.method,
                fmt_float(s.mean_fnp),
                fmt_float(s.sd_fnp),
                fmt_float(s.mean_fdp),
                fmt_float(s.sd_fdp),
                fmt_float(s.mean_fm),
                fmt_float(s.sd_fm),
            ));
        }
        write_text(path, &out)
    }

    /// Per-replication CSV: `replication,method,fnp,fdp,fm_index,n_selected`.
    pub fn write_replications_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("replication,method,fnp,fdp,fm_index,n_selected\n");
        for row in &self.replications {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.replication,
                row.metric.method_label,
                fmt_float(row.metric.fnp),
                fmt_float(row.metric.fdp),
                fmt_float(row.metric.fm_index),
                row.metric.n_selected,
            ));
        }
        write_text(path, &out)
    }
}

/// Runs every replication of the experiment and aggregates the metrics.
///
/// A failing replication aborts the run with its index attached.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let started = Instant::now();
    let ctx = ExperimentContext::prepare(spec)?;
    let per_rep: Vec<Vec<MetricRow>> = (0..spec.n_replications)
        .into_par_iter()
        .map(|r| -> Result<Vec<MetricRow>> {
            let inner = |r: usize| -> Result<Vec<MetricRow>> {
                let stats = ctx.stats_for_replication(r)?;
                spec.methods.iter().map(|m| ctx.run_method(m, &stats)).collect()
            };
            inner(r).map_err(|e| Error::Replication { replication: r, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;

    let mut summaries = Vec::with_capacity(spec.methods.len());
    for (mi, method) in spec.methods.iter().enumerate() {
        let fnp: Vec<f64> = per_rep.iter().map(|rows| rows[mi].fnp).collect();
        let fdp: Vec<f64> = per_rep.iter().map(|rows| rows[mi].fdp).collect();
        let fm: Vec<f64> = per_rep.iter().map(|rows| rows[mi].fm_index).collect();
        summaries.push(MethodSummary {
            method: method.label(),
            mean_fnp: mean(&fnp),
            sd_fnp: sample_sd(&fnp),
            mean_fdp: mean(&fdp),
            sd_fdp: sample_sd(&fdp),
            mean_fm: mean(&fm),
            sd_fm: sample_sd(&fm),
        });
    }
    let replications = per_rep
        .into_iter()
        .enumerate()
        .flat_map(|(r, rows)| rows.into_iter().map(move |metric| ReplicationRow { replication: r, metric }))
        .collect();
    Ok(ExperimentResult {
        spec: spec.clone(),
        summaries,
        replications,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub(crate) fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
