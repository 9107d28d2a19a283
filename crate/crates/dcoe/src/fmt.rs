//! Output formatting shared by the file writers.
//!
//! All floats written to CSV/JSON artifacts are rounded to 10 significant
//! digits first; the shortest decimal representation of the rounded double
//! then round-trips exactly, which keeps reruns byte-identical and diffs
//! stable.

use std::path::Path;

use crate::error::{Error, Result};

/// Rounds to 10 significant decimal digits.
pub fn round_sig10(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.9e}").parse().expect("formatted float always parses")
}

/// Formats a float for an output artifact: shortest representation of the
/// 10-significant-digit rounding; infinities become `inf` / `-inf`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{}", round_sig10(x))
    }
}

/// RFC 3339 creation timestamp. Honors `SOURCE_DATE_EPOCH` when set so that
/// otherwise-identical runs can produce byte-identical files.
pub fn creation_timestamp() -> String {
    let stamp = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
        .unwrap_or_else(chrono::Utc::now);
    stamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
