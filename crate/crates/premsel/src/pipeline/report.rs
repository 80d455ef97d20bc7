//! Consolidated results table over all evaluation artifacts, with optional
//! comparison against the reference full-scale metrics.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::manifest::{run_stage, StageOutcome};
use super::{Pipeline, PipelineError};

/// Accuracies (percent) of the original full-scale development grid,
/// 1500-epoch protocol, keyed by (h1, h2).
pub const REFERENCE_GRID_ACCURACY: [(usize, usize, f64); 15] = [
    (64, 64, 72.21),
    (128, 64, 72.75),
    (128, 128, 72.94),
    (256, 64, 73.52),
    (256, 128, 73.73),
    (256, 256, 73.63),
    (512, 64, 74.57),
    (512, 128, 74.49),
    (512, 256, 74.19),
    (512, 512, 74.58),
    (1024, 64, 75.19),
    (1024, 128, 75.47),
    (1024, 256, 75.32),
    (1024, 512, 75.34),
    (1024, 1024, 75.76),
];

/// Accuracies (percent) of the four models retrained at full scale for 2500
/// epochs without validation extraction.
pub const REFERENCE_FINAL_ACCURACY: [(usize, usize, f64); 4] = [
    (64, 64, 72.14),
    (256, 256, 73.74),
    (512, 128, 74.73),
    (1024, 1024, 76.45),
];

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// One evaluated cell as persisted by the eval and grid stages.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CellReport {
    pub h1: usize,
    pub h2: usize,
    pub params: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub fn_rate_pos: f64,
    pub fn_rate_all: f64,
    pub epochs: usize,
    pub seed: u64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportRow {
    /// "grid" (development sweep) or "final" (train/eval stages).
    pub kind: String,
    #[serde(flatten)]
    pub cell: CellReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matches_reference: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConsolidatedReport {
    pub tolerance_pp: f64,
    pub rows: Vec<ReportRow>,
}

impl Pipeline {
    /// Gather every eval/grid artifact into one machine-readable table,
    /// marking cells within tolerance of the reference metrics.
    pub fn report(&self) -> Result<StageOutcome, PipelineError> {
        let cfg = self.config();
        let sources = self.evaluation_artifacts()?;
        if sources.is_empty() {
            return Err(PipelineError::NothingToReport);
        }
        let inputs: Vec<(String, PathBuf)> = sources.clone();
        let outputs = [self.report_path()];
        let tolerance = cfg.report_tolerance;
        run_stage(
            self.work(),
            "report",
            cfg.hash_of_keys(&["report.tolerance"]),
            &inputs,
            &outputs,
            cfg.deterministic,
            || {
                let mut rows = Vec::new();
                for (name, path) in &sources {
                    let kind = if name.starts_with("grid_") {
                        "grid"
                    } else {
                        "final"
                    };
                    let text = fs::read_to_string(path)?;
                    let cell: CellReport = serde_json::from_str(&text).map_err(|e| {
                        PipelineError::Data(format!("unreadable report {}: {e}", path.display()))
                    })?;
                    let reference = reference_accuracy(kind, cell.h1, cell.h2);
                    let matches = reference.map(|r| (cell.accuracy * 100.0 - r).abs() <= tolerance);
                    rows.push(ReportRow {
                        kind: kind.to_string(),
                        cell,
                        reference_accuracy: reference,
                        matches_reference: matches,
                    });
                }
                rows.sort_by(|a, b| {
                    (&a.kind, a.cell.h1, a.cell.h2).cmp(&(&b.kind, b.cell.h1, b.cell.h2))
                });
                let report = ConsolidatedReport {
                    tolerance_pp: tolerance,
                    rows,
                };
                let mut json = serde_json::to_string_pretty(&report)
                    .map_err(|e| PipelineError::Compute(format!("json encoding: {e}")))?;
                json.push('\n');
                fs::write(self.report_path(), json)?;
                Ok(format!(
                    "{} evaluated cells consolidated",
                    report.rows.len()
                ))
            },
        )
    }

    /// Text rendering of the persisted report; a pure function of the
    /// artifact, safe to print repeatedly.
    pub fn render_report(&self) -> Result<String, PipelineError> {
        let text =
            fs::read_to_string(self.report_path()).map_err(|_| PipelineError::NothingToReport)?;
        let report: ConsolidatedReport = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Data(format!("unreadable report artifact: {e}")))?;
        let mut out = String::new();
        out.push_str(&format!(
            "{:<6} {:>9} {:>10} {:>8} {:>8} {:>10} {:>10} {:>7} {:>6}\n",
            "kind", "model", "params", "loss", "acc%", "fn/pos%", "fn/all%", "ref%", "match"
        ));
        for row in &report.rows {
            let c = &row.cell;
            out.push_str(&format!(
                "{:<6} {:>9} {:>10} {:>8.4} {:>8.2} {:>10.2} {:>10.2} {:>7} {:>6}\n",
                row.kind,
                format!("{}x{}", c.h1, c.h2),
                c.params,
                c.loss,
                c.accuracy * 100.0,
                c.fn_rate_pos * 100.0,
                c.fn_rate_all * 100.0,
                row.reference_accuracy
                    .map(|r| format!("{r:.2}"))
                    .unwrap_or_else(|| "-".into()),
                row.matches_reference
                    .map(|m| if m { "yes" } else { "no" }.to_string())
                    .unwrap_or_else(|| "-".into()),
            ));
        }
        out.push_str(&format!(
            "tolerance: +/-{} accuracy percentage points\n",
            report.tolerance_pp
        ));
        Ok(out)
    }

    /// Existing eval/grid cell artifacts, sorted by file name.
    fn evaluation_artifacts(&self) -> Result<Vec<(String, PathBuf)>, PipelineError> {
        let dir = self.work().join("reports");
        let mut found = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let is_cell = (name.starts_with("eval_") || name.starts_with("grid_"))
                && name.ends_with(".json")
                && !name.ends_with("_history.jsonl");
            if is_cell {
                found.push((name, entry.path()));
            }
        }
        found.sort();
        Ok(found)
    }
}

fn reference_accuracy(kind: &str, h1: usize, h2: usize) -> Option<f64> {
    let table: &[(usize, usize, f64)] = if kind == "grid" {
        &REFERENCE_GRID_ACCURACY
    } else {
        &REFERENCE_FINAL_ACCURACY
    };
    table
        .iter()
        .find(|&&(a, b, _)| a == h1 && b == h2)
        .map(|&(_, _, acc)| acc)
}
