//! False-negative-proportion estimation and the dual-control selection rule.
//!
//! For a threshold `t` over statistics `z_1..z_p` with `s` signal variables,
//! the estimator is
//!
//! ```text
//! FNP_hat(t) = max{ 1 - R(t)/s + (p - s) sf(t)/s, 0 }
//! ```
//!
//! with `R(t)` the number of statistics above `t`. Two-sided inputs rank by
//! `|z|` and replace `sf` with the two-sided null survival `2 sf(t)`. The
//! dual-control rule walks the descending order statistics and stops at the
//! first rank whose estimate drops below the user level `beta`; the
//! variables strictly above that order statistic are selected. The rank scan
//! is normative here: the supremum form `sup{t : FNP_hat(t) < beta}` is its
//! idealization, and the two can disagree between order statistics because
//! `R` is a step function while `sf` is continuous.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::read_text;
use crate::numcore::normal_sf;
use crate::proportion::{estimate_pi, NullCalibration};

/// Whether signals raise `z` (one-sided) or `|z|` (two-sided).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    OneSided,
    TwoSided,
}

/// Where the signal count fed into the selection rule came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SSource {
    Known,
    Estimated,
}

/// A vector of z-statistics with optional ground-truth signal indices.
///
/// Indices are 0-based inside the library; the file formats use 1-based
/// indices.
#[derive(Debug, Clone)]
pub struct StatVector {
    z: Vec<f64>,
    truth: Option<BTreeSet<usize>>,
    sidedness: Sidedness,
}

impl StatVector {
    pub fn new(z: Vec<f64>, truth: Option<BTreeSet<usize>>, sidedness: Sidedness) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::InvalidInput("statistic vector must be non-empty".into()));
        }
        if let Some(bad) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite statistic at index {bad}")));
        }
        if let Some(truth) = &truth {
            if let Some(&bad) = truth.iter().find(|&&i| i >= z.len()) {
                return Err(Error::InvalidInput(format!(
                    "truth index {bad} out of range for p = {}",
                    z.len()
                )));
            }
        }
        Ok(StatVector { z, truth, sidedness })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn truth(&self) -> Option<&BTreeSet<usize>> {
        self.truth.as_ref()
    }

    pub fn sidedness(&self) -> Sidedness {
        self.sidedness
    }

    pub fn with_truth(mut self, truth: BTreeSet<usize>) -> Result<Self> {
        if let Some(&bad) = truth.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidInput(format!(
                "truth index {bad} out of range for p = {}",
                self.len()
            )));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    /// The ranking value of coordinate `j`: `z_j` or `|z_j|`.
    #[inline]
    pub fn value(&self, j: usize) -> f64 {
        match self.sidedness {
            Sidedness::OneSided => self.z[j],
            Sidedness::TwoSided => self.z[j].abs(),
        }
    }

    /// Null survival of the ranking value at `t`: `sf(t)` one-sided,
    /// `min(2 sf(t), 1)` two-sided.
    pub fn null_sf(&self, t: f64) -> f64 {
        match self.sidedness {
            Sidedness::OneSided => normal_sf(t),
            Sidedness::TwoSided => (2.0 * normal_sf(t)).min(1.0),
        }
    }

    /// `R(t)`: how many ranking values exceed `t`.
    pub fn count_above(&self, t: f64) -> usize {
        (0..self.len()).filter(|&j| self.value(j) > t).count()
    }

    /// Indices sorted by ranking value, descending; ties keep original index
    /// order so selection is deterministic.
    pub fn order_descending(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.value(b).total_cmp(&self.value(a)));
        order
    }

    /// Loads statistics from a text file: either one z-value per line, or a
    /// two-column `index z` / `index,z` layout with 1-based indices covering
    /// `1..=p`.
    pub fn from_z_file(path: &Path, sidedness: Sidedness) -> Result<Self> {
        let content = read_text(path)?;
        let mut plain: Vec<f64> = Vec::new();
        let mut indexed: Vec<(usize, f64)> = Vec::new();
        for (lineno, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split([',', ' ', '\t']).filter(|t| !t.is_empty()).collect();
            let err = |msg: String| Error::parse(path, format!("line {}: {msg}", lineno + 1));
            match tokens.as_slice() {
                [v] => {
                    if !indexed.is_empty() {
                        return Err(err("mixed one-column and two-column rows".into()));
                    }
                    plain.push(v.parse::<f64>().map_err(|e| err(format!("bad value {v:?}: {e}")))?);
                }
                [i, v] => {
                    if !plain.is_empty() {
                        return Err(err("mixed one-column and two-column rows".into()));
                    }
                    let idx: usize = i.parse().map_err(|e| err(format!("bad index {i:?}: {e}")))?;
                    let val: f64 = v.parse().map_err(|e| err(format!("bad value {v:?}: {e}")))?;
                    indexed.push((idx, val));
                }
                _ => return Err(err(format!("expected 1 or 2 columns, got {}", tokens.len()))),
            }
        }
        let z = if indexed.is_empty() {
            plain
        } else {
            let p = indexed.len();
            let mut z = vec![f64::NAN; p];
            for (idx, val) in indexed {
                if idx == 0 || idx > p {
                    return Err(Error::parse(path, format!("index {idx} outside 1..={p}")));
                }
                if !z[idx - 1].is_nan() {
                    return Err(Error::parse(path, format!("duplicate index {idx}")));
                }
                z[idx - 1] = val;
            }
            z
        };
        if z.is_empty() {
            return Err(Error::parse(path, "no statistics found".to_string()));
        }
        StatVector::new(z, None, sidedness)
    }
}

/// Reads a ground-truth index list (1-based in the file) and returns 0-based
/// indices.
pub fn read_truth_file(path: &Path) -> Result<BTreeSet<usize>> {
    let content = read_text(path)?;
    let mut truth = BTreeSet::new();
    for token in content.split_whitespace().flat_map(|t| t.split(',')).filter(|t| !t.is_empty()) {
        let idx: usize = token
            .parse()
            .map_err(|e| Error::parse(path, format!("bad index {token:?}: {e}")))?;
        if idx == 0 {
            return Err(Error::parse(path, "truth indices are 1-based; found 0".to_string()));
        }
        if !truth.insert(idx - 1) {
            return Err(Error::parse(path, format!("duplicate truth index {idx}")));
        }
    }
    if truth.is_empty() {
        return Err(Error::parse(path, "truth file contains no indices".to_string()));
    }
    Ok(truth)
}

/// Estimated FNP of the threshold rule at `t` for `s` signals. The value is
/// clamped below at 0 by the formula and above at 1 as a numeric guard
/// against an understated `s`.
pub fn fnp_hat(t: f64, stats: &StatVector, s: f64) -> Result<f64> {
    if s <= 0.0 {
        return Err(Error::NonpositiveS(s));
    }
    let p = stats.len() as f64;
    let r = stats.count_above(t) as f64;
    Ok(estimate_from_parts(p, s, r, stats.null_sf(t)))
}

#[inline]
fn estimate_from_parts(p: f64, s: f64, r: f64, null_sf: f64) -> f64 {
    (1.0 - r / s + (p - s) * null_sf / s).clamp(0.0, 1.0)
}

/// Realized FNP at threshold `t`: the fraction of true signals at or below
/// `t`. Non-decreasing in `t`.
pub fn fnp_true(t: f64, stats: &StatVector) -> Result<f64> {
    let truth = stats.truth().filter(|s| !s.is_empty()).ok_or(Error::MissingTruth)?;
    let missed = truth.iter().filter(|&&j| stats.value(j) <= t).count();
    Ok(missed as f64 / truth.len() as f64)
}

/// Realized FDP of a selected index set; an empty selection has FDP 0 so the
/// FM-index stays defined.
pub fn fdp_true(selected: &BTreeSet<usize>, stats: &StatVector) -> Result<f64> {
    let truth = stats.truth().filter(|s| !s.is_empty()).ok_or(Error::MissingTruth)?;
    if selected.is_empty() {
        return Ok(0.0);
    }
    let false_pos = selected.iter().filter(|j| !truth.contains(j)).count();
    Ok(false_pos as f64 / selected.len() as f64)
}

/// The FNP estimate evaluated along the descending order statistics, with
/// `R` equal to the rank (rank `j` corresponds to selecting the top `j`
/// variables; tied values share their order-statistic value).
#[derive(Debug, Clone, Serialize)]
pub struct FnpCurve {
    /// Order statistics, descending (absolute values when two-sided).
    pub thresholds: Vec<f64>,
    /// `FNP_hat` at each rank.
    pub estimates: Vec<f64>,
    /// The signal count used (known `s` or estimated `s_hat`).
    pub s_used: f64,
}

fn curve_parts(stats: &StatVector, s: f64) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    if s <= 0.0 {
        return Err(Error::NonpositiveS(s));
    }
    let p = stats.len() as f64;
    let order = stats.order_descending();
    let thresholds: Vec<f64> = order.iter().map(|&j| stats.value(j)).collect();
    let estimates: Vec<f64> = thresholds
        .iter()
        .enumerate()
        .map(|(rank0, &t)| estimate_from_parts(p, s, (rank0 + 1) as f64, stats.null_sf(t)))
        .collect();
    Ok((order, thresholds, estimates))
}

/// Evaluates the FNP estimate at every order statistic.
pub fn fnp_curve(stats: &StatVector, s: f64) -> Result<FnpCurve> {
    let (_, thresholds, estimates) = curve_parts(stats, s)?;
    Ok(FnpCurve { thresholds, estimates, s_used: s })
}

/// Outcome of the dual-control selection rule.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    /// The user-specified FNP level.
    pub beta: f64,
    /// Selection threshold: the first order statistic whose rank estimate
    /// fell below `beta` (`+inf` when nothing is selected, `-inf` when the
    /// scan exhausts and everything is selected). The selected set is exactly
    /// `{j : value_j > threshold}` for continuous data.
    pub threshold: f64,
    /// Selected original indices, ascending, 0-based.
    pub selected: Vec<usize>,
    pub k_selected: usize,
    pub s_used: f64,
    pub s_source: SSource,
    /// The curve estimate at the stopping rank: the first value below
    /// `beta`, or the rank-`p` value when the scan exhausts.
    pub fnp_hat_at_threshold: f64,
    /// Set when the estimated signal proportion degenerated to zero and the
    /// selection was forced empty.
    pub degenerate_proportion: bool,
}

impl SelectionReport {
    pub fn selected_set(&self) -> BTreeSet<usize> {
        self.selected.iter().copied().collect()
    }
}

/// Dual-control selection with a known signal count.
///
/// Walks ranks `k = 1..=p` and stops at the first whose estimate is below
/// `beta`; the variables ranked strictly above it are selected. When even
/// rank 1 satisfies the bound the selection is empty; when no rank does, all
/// `p` variables are selected.
pub fn dcoe_select(stats: &StatVector, beta: f64, s: f64) -> Result<SelectionReport> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidBeta(beta));
    }
    let (order, thresholds, estimates) = curve_parts(stats, s)?;
    let p = stats.len();
    let crossing = estimates.iter().position(|&e| e < beta);
    let (threshold, n_selected, fnp_at) = match crossing {
        Some(0) => (f64::INFINITY, 0, estimates[0]),
        Some(k0) => (thresholds[k0], k0, estimates[k0]),
        None => (f64::NEG_INFINITY, p, estimates[p - 1]),
    };
    let mut selected: Vec<usize> = order[..n_selected].to_vec();
    selected.sort_unstable();
    Ok(SelectionReport {
        beta,
        threshold,
        k_selected: selected.len(),
        selected,
        s_used: s,
        s_source: SSource::Known,
        fnp_hat_at_threshold: fnp_at,
        degenerate_proportion: false,
    })
}

/// Dual-control selection with the signal count estimated from the data:
/// `s_hat = pi_hat * p` via [`estimate_pi`], then [`dcoe_select`].
///
/// A degenerate estimate (`pi_hat = 0`) yields an empty selection flagged
/// with `degenerate_proportion` instead of an error.
pub fn dcoe_select_estimated(
    stats: &StatVector,
    beta: f64,
    calibration: &NullCalibration,
) -> Result<SelectionReport> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidBeta(beta));
    }
    let estimate = estimate_pi(stats, calibration)?;
    if estimate.pi_hat <= 0.0 {
        return Ok(SelectionReport {
            beta,
            threshold: f64::INFINITY,
            selected: Vec::new(),
            k_selected: 0,
            s_used: 0.0,
            s_source: SSource::Estimated,
            fnp_hat_at_threshold: 1.0,
            degenerate_proportion: true,
        });
    }
    let s_hat = estimate.pi_hat * stats.len() as f64;
    let mut report = dcoe_select(stats, beta, s_hat)?;
    report.s_source = SSource::Estimated;
    Ok(report)
}
