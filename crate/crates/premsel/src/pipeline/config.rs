//! Pipeline configuration: flat `key=value` files with dotted section keys,
//! overridden by environment variables and CLI flags, reduced to a canonical
//! key/value map so each stage can hash exactly the keys it reads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::classifier::{ClassifierSpec, Protocol};
use crate::hashes::sha256_hex;

use super::PipelineError;

/// Recognized keys with their defaults; unknown keys in a config file are
/// rejected.
const KNOWN_KEYS: &[(&str, &str)] = &[
    ("data.url", ""),
    ("data.path", ""),
    ("data.sha256", ""),
    ("work_dir", "premsel-work"),
    ("seed", "42"),
    ("deterministic", "false"),
    ("jobs", "1"),
    ("embed.n_prime", "256"),
    ("embed.epochs", "150"),
    ("embed.batch", "4096"),
    ("embed.autoencoder", "false"),
    ("classifier.specs", "64x64,256x256,512x128,1024x1024"),
    ("classifier.protocol", "final"),
    ("classifier.epochs", ""),
    ("classifier.batch", "4096"),
    ("report.tolerance", "2.5"),
];

/// CLI-level overrides; `None` leaves the config/env value in place.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub work_dir: Option<PathBuf>,
    pub deterministic: bool,
    pub jobs: Option<usize>,
    pub specs: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EmbedCfg {
    pub n_prime: usize,
    pub epochs: usize,
    pub batch: usize,
    pub autoencoder: bool,
}

#[derive(Debug, Clone)]
pub struct ClassifierCfg {
    pub specs: Vec<ClassifierSpec>,
    pub protocol: Protocol,
    /// Overrides the protocol's default epoch budget when set.
    pub epochs: Option<usize>,
    pub batch: usize,
}

impl ClassifierCfg {
    pub fn effective_epochs(&self) -> usize {
        self.epochs
            .unwrap_or_else(|| self.protocol.default_epochs())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub data_url: Option<String>,
    pub data_path: Option<PathBuf>,
    pub data_sha256: Option<String>,
    pub work_dir: PathBuf,
    pub seed: u64,
    pub deterministic: bool,
    pub jobs: usize,
    pub embed: EmbedCfg,
    pub classifier: ClassifierCfg,
    pub report_tolerance: f64,
    values: BTreeMap<String, String>,
}

impl PipelineConfig {
    /// Resolve defaults, then the config file, then `PREMSEL_*` environment
    /// variables, then CLI overrides.
    pub fn load(config_path: Option<&Path>, overrides: &Overrides) -> Result<Self, PipelineError> {
        let mut values: BTreeMap<String, String> = KNOWN_KEYS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();

        if let Some(path) = config_path {
            let text = fs::read_to_string(path).map_err(|e| {
                PipelineError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (idx, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    PipelineError::Config(format!(
                        "{}:{}: expected key=value",
                        path.display(),
                        idx + 1
                    ))
                })?;
                let key = key.trim();
                if !values.contains_key(key) {
                    return Err(PipelineError::Config(format!(
                        "{}:{}: unknown key {key:?}",
                        path.display(),
                        idx + 1
                    )));
                }
                values.insert(key.to_string(), value.trim().to_string());
            }
        }

        if let Ok(dir) = std::env::var("PREMSEL_WORK_DIR") {
            values.insert("work_dir".into(), dir);
        }
        if let Ok(seed) = std::env::var("PREMSEL_SEED") {
            values.insert("seed".into(), seed);
        }

        if let Some(seed) = overrides.seed {
            values.insert("seed".into(), seed.to_string());
        }
        if let Some(dir) = &overrides.work_dir {
            values.insert("work_dir".into(), dir.display().to_string());
        }
        if overrides.deterministic {
            values.insert("deterministic".into(), "true".into());
        }
        if let Some(jobs) = overrides.jobs {
            values.insert("jobs".into(), jobs.to_string());
        }
        if let Some(specs) = &overrides.specs {
            values.insert("classifier.specs".into(), specs.clone());
        }

        Self::from_values(values)
    }

    fn from_values(mut values: BTreeMap<String, String>) -> Result<Self, PipelineError> {
        let get = |values: &BTreeMap<String, String>, key: &str| -> String {
            values.get(key).cloned().unwrap_or_default()
        };
        let optional = |v: String| if v.is_empty() { None } else { Some(v) };

        let specs_raw = get(&values, "classifier.specs");
        let mut specs = Vec::new();
        for part in specs_raw.split(',').filter(|p| !p.trim().is_empty()) {
            let spec: ClassifierSpec = part
                .parse()
                .map_err(|e| PipelineError::Config(format!("classifier.specs: {e}")))?;
            specs.push(spec);
        }
        if specs.is_empty() {
            return Err(PipelineError::Config("classifier.specs is empty".into()));
        }
        // Canonical form so equivalent spellings hash identically.
        let canonical_specs = specs
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        values.insert("classifier.specs".into(), canonical_specs);

        let protocol: Protocol = get(&values, "classifier.protocol")
            .parse()
            .map_err(PipelineError::Config)?;

        let cfg = PipelineConfig {
            data_url: optional(get(&values, "data.url")),
            data_path: optional(get(&values, "data.path")).map(PathBuf::from),
            data_sha256: optional(get(&values, "data.sha256")).map(|s| s.to_lowercase()),
            work_dir: PathBuf::from(get(&values, "work_dir")),
            seed: parse_key(&values, "seed")?,
            deterministic: parse_key(&values, "deterministic")?,
            jobs: parse_key(&values, "jobs")?,
            embed: EmbedCfg {
                n_prime: parse_key(&values, "embed.n_prime")?,
                epochs: parse_key(&values, "embed.epochs")?,
                batch: parse_key(&values, "embed.batch")?,
                autoencoder: parse_key(&values, "embed.autoencoder")?,
            },
            classifier: ClassifierCfg {
                specs,
                protocol,
                epochs: match optional(get(&values, "classifier.epochs")) {
                    None => None,
                    Some(raw) => Some(raw.parse().map_err(|_| {
                        PipelineError::Config(format!("classifier.epochs: bad value {raw:?}"))
                    })?),
                },
                batch: parse_key(&values, "classifier.batch")?,
            },
            report_tolerance: parse_key(&values, "report.tolerance")?,
            values,
        };

        if cfg.embed.n_prime == 0 {
            return Err(PipelineError::Config(
                "embed.n_prime must be at least 1".into(),
            ));
        }
        if cfg.embed.batch == 0 || cfg.classifier.batch == 0 {
            return Err(PipelineError::Config(
                "batch sizes must be at least 1".into(),
            ));
        }
        if cfg.jobs == 0 {
            return Err(PipelineError::Config("jobs must be at least 1".into()));
        }
        Ok(cfg)
    }

    /// Hash of the named keys' effective values; stages are invalidated by
    /// exactly the keys they read.
    pub fn hash_of_keys(&self, keys: &[&str]) -> String {
        let mut canon = String::new();
        for key in keys {
            let value = self.values.get(*key).map(String::as_str).unwrap_or("");
            let _ = writeln!(canon, "{key}={value}");
        }
        sha256_hex(canon.as_bytes())
    }
}

fn parse_key<T: std::str::FromStr>(
    values: &BTreeMap<String, String>,
    key: &str,
) -> Result<T, PipelineError> {
    let raw = values.get(key).map(String::as_str).unwrap_or("");
    raw.parse()
        .map_err(|_| PipelineError::Config(format!("{key}: bad value {raw:?}")))
}
