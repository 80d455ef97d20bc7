//! The fetch stage: bring the dataset bytes into the work dir unmodified,
//! from a local path, a `file://` URL or an HTTP(S) URL.

use std::fs;
use std::path::{Path, PathBuf};

use crate::hashes::sha256_file;

use super::manifest::{run_stage, StageOutcome};
use super::{Pipeline, PipelineError};

const CONFIG_KEYS: &[&str] = &["data.url", "data.path", "data.sha256"];

impl Pipeline {
    pub fn raw_dataset_path(&self) -> PathBuf {
        self.work().join("raw").join("dataset.txt")
    }

    pub fn fetch(&self) -> Result<StageOutcome, PipelineError> {
        let cfg = self.config().clone();
        let dest = self.raw_dataset_path();

        // A cached file that contradicts the pinned hash is an error, never
        // silently reused or replaced.
        if dest.exists() {
            verify_expected_hash(&dest, cfg.data_sha256.as_deref())?;
        }

        let mut inputs: Vec<(String, PathBuf)> = Vec::new();
        let source = match (&cfg.data_path, &cfg.data_url) {
            (Some(path), _) => Source::Copy(path.clone()),
            (None, Some(url)) => {
                if let Some(path) = url.strip_prefix("file://") {
                    Source::Copy(PathBuf::from(path))
                } else if url.starts_with("http://") || url.starts_with("https://") {
                    Source::Http(url.clone())
                } else {
                    return Err(PipelineError::Config(format!(
                        "data.url {url:?} must be file:// or http(s)://"
                    )));
                }
            }
            (None, None) => {
                return Err(PipelineError::Config(
                    "no data source: set data.path or data.url".into(),
                ))
            }
        };
        if let Source::Copy(path) = &source {
            inputs.push(("source".to_string(), path.clone()));
        }

        let config_hash = cfg.hash_of_keys(CONFIG_KEYS);
        let outputs = [dest.clone()];
        run_stage(
            self.work(),
            "fetch",
            config_hash,
            &inputs,
            &outputs,
            cfg.deterministic,
            || {
                match &source {
                    Source::Copy(path) => {
                        fs::copy(path, &dest).map_err(|e| {
                            PipelineError::Data(format!("copying {}: {e}", path.display()))
                        })?;
                    }
                    Source::Http(url) => download(url, &dest)?,
                }
                let hash = verify_expected_hash(&dest, cfg.data_sha256.as_deref())?;
                let bytes = fs::metadata(&dest).map(|m| m.len()).unwrap_or(0);
                Ok(format!("{bytes} bytes cached, sha256 {}", &hash[..12]))
            },
        )
    }
}

enum Source {
    Copy(PathBuf),
    Http(String),
}

fn download(url: &str, dest: &Path) -> Result<(), PipelineError> {
    let network_err = |e: String| PipelineError::Data(format!("fetching {url}: {e}"));
    let mut response = ureq::get(url)
        .call()
        .map_err(|e| network_err(e.to_string()))?;
    let body = response
        .body_mut()
        .with_config()
        .limit(u64::MAX)
        .read_to_vec()
        .map_err(|e| network_err(e.to_string()))?;
    fs::write(dest, body)
        .map_err(|e| PipelineError::Data(format!("writing {}: {e}", dest.display())))?;
    Ok(())
}

/// Returns the actual hash; errors when a pinned hash is configured and
/// differs.
fn verify_expected_hash(path: &Path, expected: Option<&str>) -> Result<String, PipelineError> {
    let actual = sha256_file(path)
        .map_err(|e| PipelineError::Data(format!("hashing {}: {e}", path.display())))?;
    if let Some(expected) = expected {
        if !expected.eq_ignore_ascii_case(&actual) {
            return Err(PipelineError::Data(format!(
                "hash mismatch for {}: expected {expected}, got {actual}",
                path.display()
            )));
        }
    }
    Ok(actual)
}
