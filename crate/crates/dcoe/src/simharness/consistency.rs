//! Estimator-consistency curves: `|FNP_hat(t) - FNP(t)|` along the order
//! statistics of each replication, with the theory boundaries as reference
//! lines.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::depmodels::{dependence_summary, theory_boundaries, Mu2Clamp};
use crate::error::{Error, Result};
use crate::fmt::{fmt_float, write_text};
use crate::fnpcontrol::fnp_curve;
use crate::simharness::{ExperimentContext, ExperimentSpec};

/// One evaluation point: the estimate and the realized FNP at an order
/// statistic of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyRow {
    pub replication: usize,
    pub t: f64,
    pub fnp_hat: f64,
    pub fnp_true: f64,
    pub abs_error: f64,
}

/// Per-replication consistency data plus the boundary reference lines
/// computed from the materialized covariance.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyCurve {
    pub mu1: f64,
    pub mu2: f64,
    pub mu_min: f64,
    /// Dependence parameter of the materialized covariance (clamped).
    pub eta: f64,
    pub rows: Vec<ConsistencyRow>,
}

/// Evaluates `|FNP_hat - FNP|` at every order statistic of every
/// replication, in known-`s` mode.
pub fn consistency_curve(spec: &ExperimentSpec) -> Result<ConsistencyCurve> {
    let ctx = ExperimentContext::prepare(spec)?;
    let summary = dependence_summary(&ctx.sigma);
    let boundaries = theory_boundaries(spec.gamma, summary.eta, spec.p, Mu2Clamp::Outer)?;

    let per_rep: Vec<Vec<ConsistencyRow>> = (0..spec.n_replications)
        .into_par_iter()
        .map(|r| -> Result<Vec<ConsistencyRow>> {
            let stats = ctx
                .stats_for_replication(r)
                .map_err(|e| Error::Replication { replication: r, source: Box::new(e) })?;
            let curve = fnp_curve(&stats, ctx.s as f64)
                .map_err(|e| Error::Replication { replication: r, source: Box::new(e) })?;
            // Signal values sorted ascending: FNP(t) is the fraction at or
            // below t, found by binary search.
            let truth = stats.truth().expect("harness always attaches truth");
            let mut signal_values: Vec<f64> = truth.iter().map(|&j| stats.value(j)).collect();
            signal_values.sort_by(f64::total_cmp);
            let s = signal_values.len() as f64;
            Ok(curve
                .thresholds
                .iter()
                .zip(&curve.estimates)
                .map(|(&t, &fnp_hat)| {
                    let missed = signal_values.partition_point(|&v| v <= t);
                    let fnp_true = missed as f64 / s;
                    ConsistencyRow {
                        replication: r,
                        t,
                        fnp_hat,
                        fnp_true,
                        abs_error: (fnp_hat - fnp_true).abs(),
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    Ok(ConsistencyCurve {
        mu1: boundaries.mu1,
        mu2: boundaries.mu2,
        mu_min: boundaries.mu_min,
        eta: summary.eta,
        rows: per_rep.into_iter().flatten().collect(),
    })
}

impl ConsistencyCurve {
    /// Plot-ready CSV:
    /// `replication,t,fnp_hat,fnp_true,abs_error,mu1,mu2,mu_min`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("replication,t,fnp_hat,fnp_true,abs_error,mu1,mu2,mu_min\n");
        let mu1 = fmt_float(self.mu1);
        let mu2 = fmt_float(self.mu2);
        let mu_min = fmt_float(self.mu_min);
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{mu1},{mu2},{mu_min}\n",
                row.replication,
                fmt_float(row.t),
                fmt_float(row.fnp_hat),
                fmt_float(row.fnp_true),
                fmt_float(row.abs_error),
            ));
        }
        write_text(path, &out)
    }
}
