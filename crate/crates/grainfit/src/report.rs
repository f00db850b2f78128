//! Run reports: everything needed to reproduce a fit bit-exactly, plus
//! bookkeeping (wall-clock time, notes about numerical fallbacks such as
//! eigenvalue flooring or empty-facet handling).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagram::ModelKind;
use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub model: ModelKind,
    /// Full echo of the hyperparameters the run was invoked with.
    pub config: serde_json::Value,
    pub seed: u64,
    /// Decisions triggered during the run (flooring, fallbacks, scaling).
    pub notes: Vec<String>,
    /// Path of the objective-trace CSV, if the method produces a trace.
    pub trace_path: Option<String>,
    pub wall_seconds: f64,
    pub tessellation_path: String,
}

impl FitReport {
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Objective trace as a two-column CSV (iteration, value).
pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,value\n");
    for (i, v) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{v:.12e}\n"));
    }
    out
}
