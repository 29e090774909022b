//! JSON payloads the binary writes: solve reports, evaluation summaries, and
//! the per-run manifest. Everything here is plain serde data; all files get a
//! trailing newline and 2-space indentation so re-runs are byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use darp_core::{Error, Result};
use serde::Serialize;

#[derive(Serialize)]
pub struct DualSummary {
    pub first: f64,
    pub last: f64,
    pub trace: Vec<f64>,
}

#[derive(Serialize)]
pub struct RefineReport {
    pub converged: bool,
    pub iterations: usize,
    pub row_residual: f64,
    pub col_residual: f64,
    pub mismatch_before: f64,
    pub mismatch_after: f64,
    pub marginals_renormalized: bool,
    pub restored_rows: usize,
    pub dual_objective: DualSummary,
}

/// Metric block shared by `simulate` and `evaluate`. `mismatch` is present
/// only when soft labels were available to compare against the truth
/// marginals; the imbalance ratios are `null` when a class has no samples.
#[derive(Serialize)]
pub struct EvalSummary {
    #[serde(rename = "bACC")]
    pub bacc: f64,
    #[serde(rename = "GM")]
    pub gm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<f64>,
    pub imbalance_ratio_pred: Option<f64>,
    pub imbalance_ratio_truth: Option<f64>,
}

/// Reproducibility record written next to every command's outputs. Contains
/// no timestamps or host state: identical invocations produce identical
/// manifests.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub inputs: BTreeMap<&'static str, String>,
    pub outputs: BTreeMap<&'static str, String>,
    pub config: serde_json::Value,
}

pub fn artifact_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// `delta` as a JSON value; JSON has no literal for infinity, so the
/// clipping-disabled case is recorded as the string the flag accepts.
pub fn delta_value(delta: f64) -> serde_json::Value {
    if delta.is_infinite() {
        serde_json::Value::String("inf".into())
    } else {
        serde_json::json!(delta)
    }
}

pub fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    text
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_pretty(value)).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
