//! End-to-end pipeline driver: reproducible, resumable stages with persisted
//! artifacts under one work directory.
//!
//! Stage graph: `fetch -> extract -> context -> embed -> pairs -> {train ->
//! eval, grid} -> report`. Every artifact is a function of (dataset bytes,
//! config, seed); stages skip when nothing they read has changed.

mod config;
mod fetch;
mod manifest;
mod report;
mod stages;

pub use config::{ClassifierCfg, EmbedCfg, Overrides, PipelineConfig};
pub use manifest::{StageManifest, StageOutcome};
pub use report::{CellReport, ConsolidatedReport, ReportRow};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::embedding::EmbedError;
use crate::nn::NnError;
use crate::pairs::PairError;
use crate::signatures::SignatureError;
use crate::tptp::TptpError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("compute error: {0}")]
    Compute(String),
    #[error("stage {stage} is missing upstream artifact {missing}; run the earlier stages first")]
    UpstreamMissing { stage: String, missing: String },
    #[error("nothing to report: no evaluation artifacts in the work dir")]
    NothingToReport,
    #[error("work dir {0} is locked by another invocation (remove the .lock file if stale)")]
    Locked(String),
}

impl PipelineError {
    /// Process exit code: 2 config, 3 data, 4 compute.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_)
            | PipelineError::UpstreamMissing { .. }
            | PipelineError::NothingToReport
            | PipelineError::Locked(_) => 3,
            PipelineError::Compute(_) => 4,
        }
    }
}

impl From<TptpError> for PipelineError {
    fn from(e: TptpError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<SignatureError> for PipelineError {
    fn from(e: SignatureError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<NnError> for PipelineError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Io(_)
            | NnError::BadMagic
            | NnError::VersionMismatch(_)
            | NnError::ChecksumMismatch => PipelineError::Data(e.to_string()),
            _ => PipelineError::Compute(e.to_string()),
        }
    }
}

impl From<EmbedError> for PipelineError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Net(inner) => inner.into(),
            EmbedError::MissingEmbedding { .. } | EmbedError::ZeroSignature { .. } => {
                PipelineError::Data(e.to_string())
            }
            _ => PipelineError::Compute(e.to_string()),
        }
    }
}

impl From<PairError> for PipelineError {
    fn from(e: PairError) -> Self {
        match e {
            PairError::ShapeMismatch(_) => PipelineError::Compute(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<ClassifierError> for PipelineError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Net(inner) => inner.into(),
            ClassifierError::Persist(_) => PipelineError::Data(e.to_string()),
            _ => PipelineError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Data(e.to_string())
    }
}

/// Exclusive ownership of a work directory for the lifetime of one pipeline
/// value.
#[derive(Debug)]
struct WorkLock {
    path: PathBuf,
}

impl WorkLock {
    fn acquire(work: &Path) -> Result<Self, PipelineError> {
        let path = work.join(".lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(work.display().to_string()))
            }
            Err(e) => Err(PipelineError::Data(format!(
                "cannot create lock in {}: {e}",
                work.display()
            ))),
        }
    }
}

impl Drop for WorkLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// A configured pipeline holding the work-dir lock. Construct once, then
/// invoke stages in dependency order.
#[derive(Debug)]
pub struct Pipeline {
    cfg: PipelineConfig,
    _lock: WorkLock,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        for sub in [
            "",
            "raw",
            "vocab",
            "context",
            "embeddings",
            "pairs",
            "models",
            "reports",
            "manifests",
        ] {
            fs::create_dir_all(cfg.work_dir.join(sub))?;
        }
        let lock = WorkLock::acquire(&cfg.work_dir)?;
        Ok(Pipeline { cfg, _lock: lock })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub(crate) fn work(&self) -> &Path {
        &self.cfg.work_dir
    }
}
