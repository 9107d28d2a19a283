//! The two-dimensional grid experiment: independent `N(A_ij, 1)` statistics
//! on a grid with a clustered signal region, run as a single trial per
//! method.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::MetricRow;
use crate::error::{Error, Result};
use crate::fmt::{read_text, write_text};
use crate::fnpcontrol::{Sidedness, StatVector};
use crate::numcore::{derive_seed, RngStream};
use crate::proportion::{calibrate, NullSource, DEFAULT_CALIBRATION_DRAWS};
use crate::simharness::{MethodSpec, SignalStrength};

const GRID_CALIBRATION_SEED_TAG: u64 = 0x62D;

/// How the signal region is specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskSpec {
    /// A filled disk: the `cells` grid cells closest to the center, ties at
    /// the boundary broken by angle.
    Disk { center_row: usize, center_col: usize, cells: usize },
    /// A 0/1 row-major text grid on disk.
    File { path: String },
    /// Explicit `[row, col]` cells.
    Cells { cells: Vec<[usize; 2]> },
}

/// Configuration of the grid experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub mask: MaskSpec,
    pub strength: SignalStrength,
    pub methods: Vec<MethodSpec>,
    pub master_seed: u64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.rows * self.cols < 3 {
            return Err(Error::Domain(format!(
                "grid must have at least 3 cells, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("grid experiment needs at least one method".into()));
        }
        Ok(())
    }

    /// Materializes the signal region as flat row-major indices.
    pub fn resolve_mask(&self) -> Result<BTreeSet<usize>> {
        let mask = match &self.mask {
            MaskSpec::Disk { center_row, center_col, cells } => {
                disk_mask(self.rows, self.cols, *center_row, *center_col, *cells)?
            }
            MaskSpec::File { path } => {
                let (rows, cols, mask) = read_mask(Path::new(path))?;
                if rows != self.rows || cols != self.cols {
                    return Err(Error::SizeMismatch {
                        expected: self.rows * self.cols,
                        got: rows * cols,
                    });
                }
                mask
            }
            MaskSpec::Cells { cells } => {
                let mut mask = BTreeSet::new();
                for &[r, c] in cells {
                    if r >= self.rows || c >= self.cols {
                        return Err(Error::InvalidInput(format!(
                            "mask cell ({r}, {c}) outside {}x{} grid",
                            self.rows, self.cols
                        )));
                    }
                    mask.insert(r * self.cols + c);
                }
                mask
            }
        };
        if mask.is_empty() {
            return Err(Error::InvalidInput("signal mask is empty".into()));
        }
        Ok(mask)
    }
}

/// The `cells` grid cells closest to `(center_row, center_col)`, ties at
/// equal distance broken by angle (then flat index). Distances are exact
/// integer arithmetic, so the construction is fully deterministic.
pub fn disk_mask(
    rows: usize,
    cols: usize,
    center_row: usize,
    center_col: usize,
    cells: usize,
) -> Result<BTreeSet<usize>> {
    if cells == 0 || cells > rows * cols {
        return Err(Error::Domain(format!(
            "disk mask size must lie in 1..={}, got {cells}",
            rows * cols
        )));
    }
    let mut ranked: Vec<(i64, f64, usize)> = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let dr = r as i64 - center_row as i64;
            let dc = c as i64 - center_col as i64;
            let d2 = dr * dr + dc * dc;
            let angle = (dc as f64).atan2(dr as f64).rem_euclid(std::f64::consts::TAU);
            ranked.push((d2, angle, r * cols + c));
        }
    }
    ranked.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(ranked[..cells].iter().map(|&(_, _, flat)| flat).collect())
}

/// Writes a mask as a 0/1 row-major text grid, one row per line.
pub fn write_mask(path: &Path, rows: usize, cols: usize, mask: &BTreeSet<usize>) -> Result<()> {
    let mut out = String::with_capacity(rows * (cols + 1));
    for r in 0..rows {
        for c in 0..cols {
            out.push(if mask.contains(&(r * cols + c)) { '1' } else { '0' });
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a 0/1 row-major text grid; whitespace between digits is tolerated.
pub fn read_mask(path: &Path) -> Result<(usize, usize, BTreeSet<usize>)> {
    let content = read_text(path)?;
    let mut mask = BTreeSet::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (lineno, line) in content.lines().enumerate() {
        let digits: Vec<char> = line.chars().filter(|c| !c.is_whitespace()).collect();
        if digits.is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(digits.len()),
            Some(w) if w != digits.len() => {
                return Err(Error::parse(
                    path,
                    format!("line {}: width {} differs from {}", lineno + 1, digits.len(), w),
                ));
            }
            _ => {}
        }
        for (c, ch) in digits.iter().enumerate() {
            match ch {
                '0' => {}
                '1' => {
                    mask.insert(rows * cols.unwrap() + c);
                }
                other => {
                    return Err(Error::parse(
                        path,
                        format!("line {}: unexpected character {other:?}", lineno + 1),
                    ));
                }
            }
        }
        rows += 1;
    }
    match cols {
        Some(cols) if rows > 0 => Ok((rows, cols, mask)),
        _ => Err(Error::parse(path, "empty mask file".to_string())),
    }
}

/// One method's selection on the grid.
#[derive(Debug, Clone, Serialize)]
pub struct GridSelection {
    pub method: String,
    pub selected: BTreeSet<usize>,
    pub metric: MetricRow,
}

/// Result of a single grid trial.
#[derive(Debug, Clone, Serialize)]
pub struct GridResult {
    pub spec: GridSpec,
    pub mask: BTreeSet<usize>,
    pub selections: Vec<GridSelection>,
}

/// Runs the grid experiment once: draws independent `N(A_ij, 1)` statistics
/// (with `A_ij` drawn per signal cell), flattens them row-major, and runs
/// each method a single time.
pub fn run_grid(spec: &GridSpec) -> Result<GridResult> {
    spec.validate()?;
    let mask = spec.resolve_mask()?;
    let p = spec.rows * spec.cols;
    let mut rng = RngStream::new(spec.master_seed, 0);
    let mut mean = vec![0.0; p];
    for &cell in &mask {
        mean[cell] = spec.strength.draw(&mut rng);
    }
    let mut z = vec![0.0; p];
    rng.fill_standard_normal(&mut z);
    for (zi, mi) in z.iter_mut().zip(&mean) {
        *zi += mi;
    }
    let stats = StatVector::new(z, Some(mask.clone()), Sidedness::OneSided)?;

    let calibration = if spec.methods.iter().any(|m| m.needs_calibration()) {
        Some(calibrate(
            p,
            DEFAULT_CALIBRATION_DRAWS,
            &NullSource::IndependentGaussian,
            derive_seed(spec.master_seed, GRID_CALIBRATION_SEED_TAG),
        )?)
    } else {
        None
    };

    let mut selections = Vec::with_capacity(spec.methods.len());
    for method in &spec.methods {
        let selected: BTreeSet<usize> = match method {
            MethodSpec::Dcoe { beta, s_source: crate::fnpcontrol::SSource::Known } => {
                crate::fnpcontrol::dcoe_select(&stats, *beta, mask.len() as f64)?.selected_set()
            }
            MethodSpec::Dcoe { beta, s_source: crate::fnpcontrol::SSource::Estimated } => {
                let calibration = calibration.as_ref().expect("calibration prepared");
                crate::fnpcontrol::dcoe_select_estimated(&stats, *beta, calibration)?.selected_set()
            }
            MethodSpec::Bh { alpha } => crate::baselines::bh_fdr_select(&stats, *alpha)?,
        };
        let metric = crate::baselines::evaluate(&selected, &stats, &method.label())?;
        selections.push(GridSelection { method: method.label(), selected, metric });
    }
    Ok(GridResult { spec: spec.clone(), mask, selections })
}

impl GridResult {
    /// Metrics CSV: `method,fnp,fdp,fm_index,n_selected`.
    pub fn write_metrics_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("method,fnp,fdp,fm_index,n_selected\n");
        for sel in &self.selections {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                sel.method,
                crate::fmt::fmt_float(sel.metric.fnp),
                crate::fmt::fmt_float(sel.metric.fdp),
                crate::fmt::fmt_float(sel.metric.fm_index),
                sel.metric.n_selected,
            ));
        }
        write_text(path, &out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnpcontrol::SSource;

    fn small_spec() -> GridSpec {
        GridSpec {
            rows: 20,
            cols: 20,
            mask: MaskSpec::Disk { center_row: 10, center_col: 10, cells: 40 },
            strength: SignalStrength::Uniform { lo: 1.0, hi: 2.5 },
            methods: vec![
                MethodSpec::Dcoe { beta: 0.1, s_source: SSource::Known },
                MethodSpec::Dcoe { beta: 0.5, s_source: SSource::Known },
                MethodSpec::Bh { alpha: 0.05 },
            ],
            master_seed: 77,
        }
    }

    #[test]
    fn disk_mask_has_exact_cardinality_and_is_deterministic() {
        let a = disk_mask(100, 100, 50, 50, 994).unwrap();
        let b = disk_mask(100, 100, 50, 50, 994).unwrap();
        assert_eq!(a.len(), 994);
        assert_eq!(a, b);
        // Roughly disk-shaped: all cells within the circumscribing radius.
        let r2_max = a
            .iter()
            .map(|&flat| {
                let (r, c) = (flat / 100, flat % 100);
                let (dr, dc) = (r as i64 - 50, c as i64 - 50);
                dr * dr + dc * dc
            })
            .max()
            .unwrap();
        assert!((r2_max as f64).sqrt() < 20.0);
    }

    #[test]
    fn mask_file_round_trip() {
        let mask = disk_mask(12, 9, 6, 4, 17).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.txt");
        write_mask(&path, 12, 9, &mask).unwrap();
        let (rows, cols, loaded) = read_mask(&path).unwrap();
        assert_eq!((rows, cols), (12, 9));
        assert_eq!(loaded, mask);
    }

    #[test]
    fn separated_signals_are_recovered_on_the_grid() {
        let mut spec = small_spec();
        spec.strength = SignalStrength::Uniform { lo: 100.0, hi: 101.0 };
        let result = run_grid(&spec).unwrap();
        // beta = 0.1 with known s: the selection stops at the smallest top
        // set estimated below beta, i.e. floor((1 - beta) s) signal cells.
        let dcoe = &result.selections[0];
        let hits = dcoe.selected.intersection(&result.mask).count();
        // One rank of slack: 1 - k/s can round to either side of beta when
        // beta * s is an integer.
        let expected = (0.9 * result.mask.len() as f64).floor() as usize - 1;
        assert!(hits >= expected, "hits {hits} < {expected}");
        assert!(dcoe.metric.fdp <= 0.05);
        assert!(dcoe.metric.fnp <= 0.1 + 2.0 / result.mask.len() as f64);
    }

    #[test]
    fn looser_beta_selects_a_subset() {
        let result = run_grid(&small_spec()).unwrap();
        let tight = &result.selections[0].selected; // beta = 0.1
        let loose = &result.selections[1].selected; // beta = 0.5
        assert!(loose.is_subset(tight));
    }

    #[test]
    fn grid_run_is_reproducible() {
        let spec = small_spec();
        let a = run_grid(&spec).unwrap();
        let b = run_grid(&spec).unwrap();
        for (x, y) in a.selections.iter().zip(&b.selections) {
            assert_eq!(x.selected, y.selected);
            assert_eq!(x.metric, y.metric);
        }
    }

    #[test]
    fn estimated_s_grid_path_runs() {
        let mut spec = small_spec();
        spec.rows = 30;
        spec.cols = 30;
        spec.mask = MaskSpec::Disk { center_row: 15, center_col: 15, cells: 90 };
        spec.methods = vec![MethodSpec::Dcoe { beta: 0.1, s_source: SSource::Estimated }];
        let result = run_grid(&spec).unwrap();
        assert_eq!(result.selections.len(), 1);
    }

    #[test]
    fn bad_masks_are_rejected() {
        assert!(disk_mask(10, 10, 5, 5, 0).is_err());
        assert!(disk_mask(10, 10, 5, 5, 101).is_err());
        let mut spec = small_spec();
        spec.mask = MaskSpec::Cells { cells: vec![[25, 0]] };
        assert!(spec.resolve_mask().is_err());
    }
}
