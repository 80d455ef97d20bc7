//! Per-stage manifests: a stage re-runs iff any input hash or its config
//! hash changed; otherwise it is skipped and its artifacts stay untouched.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::hashes::sha256_file;

use super::PipelineError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub input_hashes: BTreeMap<String, String>,
    /// Output paths relative to the work dir.
    pub outputs: Vec<String>,
    /// Zero in deterministic mode so reruns produce identical bytes.
    pub completed_unix: u64,
}

#[derive(Debug)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub skipped: bool,
    pub summary: String,
}

impl StageOutcome {
    pub fn describe(&self) -> String {
        if self.skipped {
            format!("[{}] up to date, skipped ({})", self.stage, self.summary)
        } else {
            format!("[{}] {}", self.stage, self.summary)
        }
    }
}

fn manifest_path(work: &Path, stage: &str) -> PathBuf {
    work.join("manifests").join(format!("{stage}.json"))
}

fn relative_to(work: &Path, path: &Path) -> String {
    path.strip_prefix(work)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

/// Check inputs exist, skip when the manifest still matches, otherwise run
/// the stage body and record a fresh manifest. Input labels must be unique
/// within a stage.
pub(crate) fn run_stage(
    work: &Path,
    stage: &'static str,
    config_hash: String,
    inputs: &[(String, PathBuf)],
    outputs: &[PathBuf],
    deterministic: bool,
    body: impl FnOnce() -> Result<String, PipelineError>,
) -> Result<StageOutcome, PipelineError> {
    for (label, path) in inputs {
        if !path.exists() {
            return Err(PipelineError::UpstreamMissing {
                stage: stage.to_string(),
                missing: format!("{label} ({})", relative_to(work, path)),
            });
        }
    }
    let mut input_hashes = BTreeMap::new();
    for (label, path) in inputs {
        let hash = sha256_file(path)
            .map_err(|e| PipelineError::Data(format!("hashing {}: {e}", path.display())))?;
        let previous = input_hashes.insert(label.clone(), hash);
        assert!(previous.is_none(), "duplicate input label {label:?}");
    }

    let mpath = manifest_path(work, stage);
    if let Ok(text) = fs::read_to_string(&mpath) {
        if let Ok(existing) = serde_json::from_str::<StageManifest>(&text) {
            let fresh = existing.config_hash == config_hash
                && existing.input_hashes == input_hashes
                && existing.outputs.iter().all(|rel| work.join(rel).exists());
            if fresh {
                return Ok(StageOutcome {
                    stage,
                    skipped: true,
                    summary: format!("{} outputs present", existing.outputs.len()),
                });
            }
        }
    }

    let summary = body()?;

    for path in outputs {
        if !path.exists() {
            return Err(PipelineError::Compute(format!(
                "stage {stage} did not produce {}",
                path.display()
            )));
        }
    }
    let manifest = StageManifest {
        stage: stage.to_string(),
        config_hash,
        input_hashes,
        outputs: outputs.iter().map(|p| relative_to(work, p)).collect(),
        completed_unix: if deterministic {
            0
        } else {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        },
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PipelineError::Compute(format!("manifest encoding: {e}")))?;
    fs::write(&mpath, json)
        .map_err(|e| PipelineError::Data(format!("writing {}: {e}", mpath.display())))?;

    Ok(StageOutcome {
        stage,
        skipped: false,
        summary,
    })
}
