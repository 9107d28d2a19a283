//! Benjamini-Hochberg baseline selection and the evaluation metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnpcontrol::{fdp_true, StatVector};

/// One row of a results table: realized error proportions of a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method_label: String,
    pub fnp: f64,
    pub fdp: f64,
    /// Fowlkes-Mallows summary `sqrt((1 - fnp)(1 - fdp))`.
    pub fm_index: f64,
    pub n_selected: usize,
}

/// BH step-up selection at level `alpha`.
///
/// P-values are `sf(z_j)` one-sided and `2 sf(|z_j|)` two-sided; with the
/// ascending p-values `p_(1) <= ... <= p_(p)`, ranks `1..=k*` are rejected
/// where `k* = max{i : p_(i) <= i alpha / p}`. Returns the selected original
/// indices (ascending, 0-based), empty when no rank qualifies.
pub fn bh_fdr_select(stats: &StatVector, alpha: f64) -> Result<BTreeSet<usize>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let p = stats.len();
    let pvalues: Vec<f64> = (0..p).map(|j| stats.null_sf(stats.value(j))).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut k_star = 0;
    for (rank0, &j) in order.iter().enumerate() {
        if pvalues[j] <= (rank0 + 1) as f64 * alpha / p as f64 {
            k_star = rank0 + 1;
        }
    }
    Ok(order[..k_star].iter().copied().collect())
}

/// Realized FNP/FDP/FM of a selection against the ground truth.
pub fn evaluate(selected: &BTreeSet<usize>, stats: &StatVector, label: &str) -> Result<MetricRow> {
    let truth = stats.truth().filter(|t| !t.is_empty()).ok_or(Error::MissingTruth)?;
    let missed = truth.iter().filter(|j| !selected.contains(j)).count();
    let fnp = missed as f64 / truth.len() as f64;
    let fdp = fdp_true(selected, stats)?;
    Ok(MetricRow {
        method_label: label.to_string(),
        fnp,
        fdp,
        fm_index: ((1.0 - fnp) * (1.0 - fdp)).sqrt(),
        n_selected: selected.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnpcontrol::Sidedness;
    use crate::numcore::{normal_quantile, RngStream};
    use proptest::prelude::*;

    /// Builds a StatVector whose one-sided p-values are exactly `pvals`.
    fn stats_with_pvalues(pvals: &[f64]) -> StatVector {
        let z: Vec<f64> = pvals.iter().map(|&q| normal_quantile(1.0 - q).unwrap()).collect();
        StatVector::new(z, None, Sidedness::OneSided).unwrap()
    }

    #[test]
    fn bh_step_up_example() {
        let sv = stats_with_pvalues(&[0.001, 0.02, 0.03, 0.9]);
        let selected = bh_fdr_select(&sv, 0.05).unwrap();
        // k* = 3 since 0.03 <= 3 * 0.05 / 4.
        assert_eq!(selected, [0usize, 1, 2].into_iter().collect());
    }

    #[test]
    fn bh_rejects_nothing_when_pvalues_are_one() {
        let sv = StatVector::new(vec![-40.0; 5], None, Sidedness::OneSided).unwrap();
        assert!(bh_fdr_select(&sv, 0.05).unwrap().is_empty());
    }

    #[test]
    fn bh_single_pvalue_threshold_is_alpha() {
        let sv = stats_with_pvalues(&[0.04]);
        assert_eq!(bh_fdr_select(&sv, 0.05).unwrap().len(), 1);
        let sv = stats_with_pvalues(&[0.06]);
        assert!(bh_fdr_select(&sv, 0.05).unwrap().is_empty());
    }

    #[test]
    fn bh_invalid_alpha() {
        let sv = stats_with_pvalues(&[0.5]);
        for alpha in [0.0, 1.0, -1.0] {
            assert!(matches!(bh_fdr_select(&sv, alpha), Err(Error::InvalidAlpha(_))));
        }
    }

    proptest! {
        #[test]
        fn bh_matches_brute_force(seed in 0u64..300, p in 1usize..150, alpha in 0.01f64..0.5) {
            let mut rng = RngStream::new(seed, 2);
            let z: Vec<f64> = (0..p).map(|_| rng.standard_normal() + 0.8).collect();
            let sv = StatVector::new(z, None, Sidedness::OneSided).unwrap();
            let fast = bh_fdr_select(&sv, alpha).unwrap();

            // Brute force: maximize i over the threshold condition directly.
            let mut pv: Vec<(f64, usize)> =
                (0..p).map(|j| (crate::numcore::normal_sf(sv.z()[j]), j)).collect();
            pv.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut best = 0;
            for i in 1..=p {
                if pv[i - 1].0 <= i as f64 * alpha / p as f64 {
                    best = i;
                }
            }
            let expected: BTreeSet<usize> = pv[..best].iter().map(|&(_, j)| j).collect();
            prop_assert_eq!(fast, expected);
        }

        #[test]
        fn bh_monotone_in_alpha(seed in 0u64..200, a1 in 0.01f64..0.4, bump in 0.0f64..0.4) {
            let a2 = (a1 + bump).min(0.9);
            let mut rng = RngStream::new(seed, 3);
            let z: Vec<f64> = (0..80).map(|_| rng.standard_normal() + 1.0).collect();
            let sv = StatVector::new(z, None, Sidedness::OneSided).unwrap();
            let tight = bh_fdr_select(&sv, a1).unwrap();
            let loose = bh_fdr_select(&sv, a2).unwrap();
            prop_assert!(tight.is_subset(&loose));
        }
    }

    #[test]
    fn evaluate_perfect_and_empty_selection() {
        let sv = StatVector::new(
            vec![3.0, 2.5, 0.1, -0.4],
            Some([0usize, 1].into_iter().collect()),
            Sidedness::OneSided,
        )
        .unwrap();
        let perfect = evaluate(&[0usize, 1].into_iter().collect(), &sv, "perfect").unwrap();
        assert_eq!((perfect.fnp, perfect.fdp, perfect.fm_index), (0.0, 0.0, 1.0));

        let empty = evaluate(&BTreeSet::new(), &sv, "empty").unwrap();
        assert_eq!((empty.fnp, empty.fdp, empty.fm_index), (1.0, 0.0, 0.0));
    }

    #[test]
    fn fm_index_paper_row() {
        // fnp = 0.19, fdp = 0.02 -> fm ~ 0.891.
        let fm = ((1.0 - 0.19f64) * (1.0 - 0.02)).sqrt();
        assert!((fm - 0.891).abs() < 5e-4);
    }

    #[test]
    fn fm_index_range_and_zeros() {
        let sv = StatVector::new(
            vec![3.0, 2.5, 0.1, -0.4],
            Some([0usize, 1].into_iter().collect()),
            Sidedness::OneSided,
        )
        .unwrap();
        // One signal and one noise selected.
        let row = evaluate(&[0usize, 2].into_iter().collect(), &sv, "half").unwrap();
        assert_eq!(row.fnp, 0.5);
        assert_eq!(row.fdp, 0.5);
        assert!((row.fm_index - 0.5).abs() < 1e-12);
        assert!((row.fm_index * row.fm_index - (1.0 - row.fnp) * (1.0 - row.fdp)).abs() <= 1e-12);
    }
}
