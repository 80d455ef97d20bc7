//! The extract/context/embed/pairs/train/eval/grid stages.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{
    evaluate, run_grid, train_classifier, ClassifierSpec, ClassifierTrainOptions, Protocol,
};
use crate::embedding::{train_autoencoder, train_context_model, EmbedOptions, EmbeddingCache};
use crate::hashes::{derived_rng, fnv1a64};
use crate::nn::{load_model, save_model, EpochStats, Tensor2, TensorContainer, TensorData};
use crate::pairs::{apply_standardizer, build_pairs, fit_standardizer, split, PairMatrix};
use crate::signatures::{context_matrix, signature_of, FunctorVocab, SparseSignature};
use crate::tptp::{corpus_statistics, extract_functors, parse_dataset_stream, CorpusStats};

use super::manifest::{run_stage, StageOutcome};
use super::report::{CellReport, Confusion};
use super::{Pipeline, PipelineError};

const EMBED_KEYS: &[&str] = &[
    "embed.n_prime",
    "embed.epochs",
    "embed.batch",
    "embed.autoencoder",
    "seed",
    "deterministic",
];
const PAIRS_KEYS: &[&str] = &["seed", "deterministic"];
const CLASSIFIER_KEYS: &[&str] = &[
    "classifier.specs",
    "classifier.protocol",
    "classifier.epochs",
    "classifier.batch",
    "seed",
    "deterministic",
];
const GRID_KEYS: &[&str] = &[
    "classifier.epochs",
    "classifier.batch",
    "seed",
    "deterministic",
];

/// Extract-stage artifact summary persisted next to the vocabulary.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct ExtractStats {
    pub corpus: CorpusStats,
    pub vocab_size: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct PairsSummary {
    pub pairs: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub positive_fraction: f64,
    pub feature_dim: usize,
}

impl Pipeline {
    pub fn vocab_path(&self) -> PathBuf {
        self.work().join("vocab").join("vocab.txt")
    }

    pub fn signatures_path(&self) -> PathBuf {
        self.work().join("vocab").join("signatures.pstc")
    }

    pub fn stats_path(&self) -> PathBuf {
        self.work().join("vocab").join("stats.json")
    }

    pub fn context_path(&self) -> PathBuf {
        self.work().join("context").join("context.pstc")
    }

    pub fn context_model_path(&self) -> PathBuf {
        self.work().join("models").join("context_model.psnn")
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.work().join("embeddings").join("embeddings.pstc")
    }

    pub fn embed_history_path(&self) -> PathBuf {
        self.work().join("embeddings").join("history.jsonl")
    }

    pub fn pairs_train_path(&self) -> PathBuf {
        self.work().join("pairs").join("train.pstc")
    }

    pub fn pairs_test_path(&self) -> PathBuf {
        self.work().join("pairs").join("test.pstc")
    }

    pub fn standardizer_path(&self) -> PathBuf {
        self.work().join("pairs").join("standardizer.pstc")
    }

    pub fn pairs_summary_path(&self) -> PathBuf {
        self.work().join("pairs").join("summary.json")
    }

    pub fn model_path(&self, spec: &ClassifierSpec) -> PathBuf {
        self.work().join("models").join(format!("clf_{spec}.psnn"))
    }

    pub fn model_history_path(&self, spec: &ClassifierSpec) -> PathBuf {
        self.work()
            .join("models")
            .join(format!("clf_{spec}_history.jsonl"))
    }

    pub fn eval_report_path(&self, spec: &ClassifierSpec) -> PathBuf {
        self.work()
            .join("reports")
            .join(format!("eval_{spec}.json"))
    }

    pub fn grid_model_path(&self, spec: &ClassifierSpec) -> PathBuf {
        self.work().join("models").join(format!("grid_{spec}.psnn"))
    }

    pub fn grid_report_path(&self, spec: &ClassifierSpec) -> PathBuf {
        self.work()
            .join("reports")
            .join(format!("grid_{spec}.json"))
    }

    pub fn grid_history_path(&self, spec: &ClassifierSpec) -> PathBuf {
        self.work()
            .join("reports")
            .join(format!("grid_{spec}_history.jsonl"))
    }

    pub fn report_path(&self) -> PathBuf {
        self.work().join("reports").join("report.json")
    }

    /// Parse the dataset, build the vocabulary and one sparse signature per
    /// unique formula (first-appearance order).
    pub fn extract(&self) -> Result<StageOutcome, PipelineError> {
        let raw = self.raw_dataset_path();
        let outputs = [self.vocab_path(), self.signatures_path(), self.stats_path()];
        run_stage(
            self.work(),
            "extract",
            self.config().hash_of_keys(&[]),
            &[("dataset".to_string(), raw.clone())],
            &outputs,
            self.config().deterministic,
            || {
                let text = fs::read_to_string(&raw)?;
                let blocks = parse_dataset_stream(&text)?;
                let stats = corpus_statistics(&blocks)?;

                let mut formulas: Vec<&str> = Vec::new();
                let mut seen = std::collections::HashSet::new();
                for block in &blocks {
                    for f in std::iter::once(&block.conjecture)
                        .chain(&block.positives)
                        .chain(&block.negatives)
                    {
                        if seen.insert(f.as_str()) {
                            formulas.push(f);
                        }
                    }
                }

                let mut counts = Vec::with_capacity(formulas.len());
                for f in &formulas {
                    counts.push(extract_functors(f)?);
                }
                let vocab = FunctorVocab::build(counts.iter());
                let mut signatures = Vec::with_capacity(counts.len());
                for c in &counts {
                    signatures.push(signature_of(c, &vocab)?);
                }
                let hashes: Vec<u64> = formulas.iter().map(|f| fnv1a64(f.as_bytes())).collect();

                fs::write(self.vocab_path(), vocab.symbols().join("\n") + "\n")?;
                save_signatures(&self.signatures_path(), vocab.len(), &hashes, &signatures)?;
                let summary = ExtractStats {
                    corpus: stats.clone(),
                    vocab_size: vocab.len(),
                };
                fs::write(self.stats_path(), to_pretty_json(&summary)?)?;

                Ok(format!(
                    "{} blocks, {} unique formulae, {} pairs, vocabulary {}",
                    stats.blocks,
                    stats.unique_formulae,
                    stats.pairs,
                    vocab.len()
                ))
            },
        )
    }

    /// Accumulate the full context matrix from the stored signatures.
    pub fn context(&self) -> Result<StageOutcome, PipelineError> {
        let sig_path = self.signatures_path();
        let outputs = [self.context_path()];
        run_stage(
            self.work(),
            "context",
            self.config().hash_of_keys(&[]),
            &[("signatures".to_string(), sig_path.clone())],
            &outputs,
            self.config().deterministic,
            || {
                let (vocab_size, _, signatures) = load_signatures(&sig_path)?;
                let rows = context_matrix(&signatures, vocab_size)?;
                let mut data = Vec::with_capacity(vocab_size * vocab_size);
                for row in &rows {
                    data.extend(row.probs.iter().map(|&p| p as f32));
                }
                let mut container = TensorContainer::new();
                container.push(
                    "context",
                    TensorData::F32 {
                        rows: vocab_size,
                        cols: vocab_size,
                        data,
                    },
                );
                container.save(&self.context_path())?;
                Ok(format!("{vocab_size} context rows, each L1-normalized"))
            },
        )
    }

    /// Train the context model (or the autoencoder) and cache embeddings of
    /// every unique formula.
    pub fn embed(&self) -> Result<StageOutcome, PipelineError> {
        let cfg = self.config();
        let autoencoder = cfg.embed.autoencoder;
        let sig_path = self.signatures_path();
        let mut inputs = vec![("signatures".to_string(), sig_path.clone())];
        if !autoencoder {
            inputs.push(("context".to_string(), self.context_path()));
        }
        let outputs = [
            self.context_model_path(),
            self.embeddings_path(),
            self.embed_history_path(),
        ];
        run_stage(
            self.work(),
            "embed",
            cfg.hash_of_keys(EMBED_KEYS),
            &inputs,
            &outputs,
            cfg.deterministic,
            || {
                let (vocab_size, hashes, signatures) = load_signatures(&sig_path)?;
                let opts = EmbedOptions {
                    n_prime: cfg.embed.n_prime,
                    epochs: cfg.embed.epochs,
                    batch_size: cfg.embed.batch,
                    deterministic: cfg.deterministic,
                };
                let mut rng = derived_rng(cfg.seed, "embed");
                let (model, history) = if autoencoder {
                    // Formulae without functors have no normalizable target;
                    // they are skipped for training but still embedded below.
                    let nonempty: Vec<SparseSignature> = signatures
                        .iter()
                        .filter(|s| !s.is_empty())
                        .cloned()
                        .collect();
                    train_autoencoder(&nonempty, vocab_size, &opts, &mut rng)?
                } else {
                    let container = TensorContainer::load(&self.context_path())?;
                    let (rows, cols, data) = container.f32_matrix("context")?;
                    let ctx = Tensor2::from_vec(rows, cols, data.to_vec());
                    train_context_model(&ctx, &opts, &mut rng)?
                };

                save_model(model.net(), &self.context_model_path())?;
                write_history(&self.embed_history_path(), &history)?;
                let cache = EmbeddingCache::build_hashed(&model, &hashes, &signatures)?;
                cache.to_container().save(&self.embeddings_path())?;

                let tail = history
                    .last()
                    .map(|e| format!("final loss {:.6}, accuracy {:.4}", e.loss, e.accuracy))
                    .unwrap_or_else(|| "untrained".into());
                Ok(format!(
                    "{} model (n={vocab_size}, n'={}), {} epochs, {tail}; {} embeddings cached",
                    if autoencoder {
                        "autoencoder"
                    } else {
                        "context"
                    },
                    cfg.embed.n_prime,
                    history.len(),
                    cache.len()
                ))
            },
        )
    }

    /// Assemble labelled pair vectors, split train/test and standardize.
    pub fn pairs(&self) -> Result<StageOutcome, PipelineError> {
        let cfg = self.config();
        let raw = self.raw_dataset_path();
        let embeddings = self.embeddings_path();
        let outputs = [
            self.pairs_train_path(),
            self.pairs_test_path(),
            self.standardizer_path(),
            self.pairs_summary_path(),
        ];
        run_stage(
            self.work(),
            "pairs",
            cfg.hash_of_keys(PAIRS_KEYS),
            &[
                ("dataset".to_string(), raw.clone()),
                ("embeddings".to_string(), embeddings.clone()),
            ],
            &outputs,
            cfg.deterministic,
            || {
                let text = fs::read_to_string(&raw)?;
                let blocks = parse_dataset_stream(&text)?;
                let cache = EmbeddingCache::from_container(&TensorContainer::load(&embeddings)?)?;
                let examples = build_pairs(&blocks, &cache)?;
                let total = examples.len();
                let positives = examples.iter().filter(|e| e.label == 1).count();

                let mut rng = derived_rng(cfg.seed, "pairs");
                let (train_set, test_set) = split(examples, 0.1, &mut rng)?;
                let mut train_matrix = PairMatrix::from_examples(&train_set);
                let mut test_matrix = PairMatrix::from_examples(&test_set);
                let stats = fit_standardizer(&train_matrix.features)?;
                apply_standardizer(&stats, &mut train_matrix.features)?;
                apply_standardizer(&stats, &mut test_matrix.features)?;

                train_matrix.to_container().save(&self.pairs_train_path())?;
                test_matrix.to_container().save(&self.pairs_test_path())?;
                stats.to_container().save(&self.standardizer_path())?;
                let summary = PairsSummary {
                    pairs: total,
                    train_rows: train_matrix.len(),
                    test_rows: test_matrix.len(),
                    positive_fraction: positives as f64 / total as f64,
                    feature_dim: train_matrix.dim(),
                };
                fs::write(self.pairs_summary_path(), to_pretty_json(&summary)?)?;
                Ok(format!(
                    "{total} pairs ({:.1}% positive) -> {} train / {} test, dim {}",
                    100.0 * positives as f64 / total as f64,
                    train_matrix.len(),
                    test_matrix.len(),
                    train_matrix.dim()
                ))
            },
        )
    }

    /// Train the configured classifier specs under the configured protocol.
    pub fn train(&self) -> Result<StageOutcome, PipelineError> {
        let cfg = self.config();
        let train_path = self.pairs_train_path();
        let mut outputs = Vec::new();
        for spec in &cfg.classifier.specs {
            outputs.push(self.model_path(spec));
            outputs.push(self.model_history_path(spec));
        }
        run_stage(
            self.work(),
            "train",
            cfg.hash_of_keys(CLASSIFIER_KEYS),
            &[("pairs".to_string(), train_path.clone())],
            &outputs,
            cfg.deterministic,
            || {
                let rows = PairMatrix::from_container(&TensorContainer::load(&train_path)?)?;
                let opts = ClassifierTrainOptions {
                    protocol: cfg.classifier.protocol,
                    epochs: cfg.classifier.effective_epochs(),
                    batch_size: cfg.classifier.batch,
                    deterministic: cfg.deterministic,
                };
                let mut summaries = Vec::new();
                for spec in &cfg.classifier.specs {
                    let mut rng = derived_rng(cfg.seed, &format!("train/{spec}"));
                    let (net, history) = train_classifier(spec, &rows, &opts, &mut rng)?;
                    save_model(&net, &self.model_path(spec))?;
                    write_history(&self.model_history_path(spec), &history)?;
                    let tail = history
                        .last()
                        .map(|e| format!("loss {:.4}", e.loss))
                        .unwrap_or_else(|| "untrained".into());
                    summaries.push(format!("{spec} {tail}"));
                }
                Ok(format!(
                    "{} classifiers ({} epochs, {:?} protocol): {}",
                    cfg.classifier.specs.len(),
                    opts.epochs,
                    cfg.classifier.protocol,
                    summaries.join(", ")
                ))
            },
        )
    }

    /// Evaluate every trained spec on the held-out pairs.
    pub fn eval(&self) -> Result<StageOutcome, PipelineError> {
        let cfg = self.config();
        let test_path = self.pairs_test_path();
        let mut inputs = vec![("pairs".to_string(), test_path.clone())];
        let model_paths: Vec<PathBuf> = cfg
            .classifier
            .specs
            .iter()
            .map(|s| self.model_path(s))
            .collect();
        for (spec, path) in cfg.classifier.specs.iter().zip(&model_paths) {
            inputs.push((format!("model_{spec}"), path.clone()));
        }
        let outputs: Vec<PathBuf> = cfg
            .classifier
            .specs
            .iter()
            .map(|s| self.eval_report_path(s))
            .collect();
        run_stage(
            self.work(),
            "eval",
            cfg.hash_of_keys(CLASSIFIER_KEYS),
            &inputs,
            &outputs,
            cfg.deterministic,
            || {
                let rows = PairMatrix::from_container(&TensorContainer::load(&test_path)?)?;
                let mut lines = Vec::new();
                for (spec, model_path) in cfg.classifier.specs.iter().zip(&model_paths) {
                    let net = load_model(model_path)?;
                    let report = evaluate(&net, &rows)?;
                    let cell = CellReport {
                        h1: spec.h1,
                        h2: spec.h2,
                        params: crate::classifier::param_count_for_input(rows.dim(), spec),
                        loss: report.loss,
                        accuracy: report.accuracy,
                        fn_rate_pos: report.fn_rate_pos,
                        fn_rate_all: report.fn_rate_all,
                        epochs: cfg.classifier.effective_epochs(),
                        seed: cfg.seed,
                        confusion: Confusion {
                            tp: report.tp,
                            fp: report.fp,
                            tn: report.tn,
                            fn_: report.fn_,
                        },
                    };
                    fs::write(self.eval_report_path(spec), to_pretty_json(&cell)?)?;
                    lines.push(format!("{spec} accuracy {:.4}", report.accuracy));
                }
                Ok(format!("evaluated {}", lines.join(", ")))
            },
        )
    }

    /// Train and evaluate all 15 grid cells under the development protocol,
    /// persisting each cell as it completes.
    pub fn grid(&self) -> Result<StageOutcome, PipelineError> {
        let cfg = self.config();
        let train_path = self.pairs_train_path();
        let test_path = self.pairs_test_path();
        let specs = ClassifierSpec::grid();
        let mut outputs = Vec::new();
        for spec in &specs {
            outputs.push(self.grid_model_path(spec));
            outputs.push(self.grid_report_path(spec));
            outputs.push(self.grid_history_path(spec));
        }
        run_stage(
            self.work(),
            "grid",
            cfg.hash_of_keys(GRID_KEYS),
            &[
                ("train".to_string(), train_path.clone()),
                ("test".to_string(), test_path.clone()),
            ],
            &outputs,
            cfg.deterministic,
            || {
                let train_rows = PairMatrix::from_container(&TensorContainer::load(&train_path)?)?;
                let test_rows = PairMatrix::from_container(&TensorContainer::load(&test_path)?)?;
                let opts = ClassifierTrainOptions {
                    protocol: Protocol::Dev,
                    epochs: cfg
                        .classifier
                        .epochs
                        .unwrap_or_else(|| Protocol::Dev.default_epochs()),
                    batch_size: cfg.classifier.batch,
                    deterministic: cfg.deterministic,
                };
                let seed = cfg.seed;
                let cells = run_grid(
                    &specs,
                    &train_rows,
                    &test_rows,
                    &opts,
                    seed,
                    cfg.jobs,
                    |result| {
                        let spec = &result.cell.spec;
                        crate::nn::io::save_model(&result.model, &self.grid_model_path(spec))
                            .map_err(std::io::Error::other)?;
                        write_history_io(&self.grid_history_path(spec), &result.history)?;
                        let cell = CellReport {
                            h1: spec.h1,
                            h2: spec.h2,
                            params: result.cell.params,
                            loss: result.cell.report.loss,
                            accuracy: result.cell.report.accuracy,
                            fn_rate_pos: result.cell.report.fn_rate_pos,
                            fn_rate_all: result.cell.report.fn_rate_all,
                            epochs: result.cell.epochs,
                            seed: result.cell.seed,
                            confusion: Confusion {
                                tp: result.cell.report.tp,
                                fp: result.cell.report.fp,
                                tn: result.cell.report.tn,
                                fn_: result.cell.report.fn_,
                            },
                        };
                        let json = serde_json::to_vec_pretty(&cell)?;
                        fs::write(self.grid_report_path(spec), json)?;
                        Ok(())
                    },
                )?;
                let best = cells
                    .iter()
                    .max_by(|a, b| a.report.accuracy.total_cmp(&b.report.accuracy))
                    .expect("grid is non-empty");
                Ok(format!(
                    "{} cells ({} epochs each); best accuracy {:.4} at {}",
                    cells.len(),
                    opts.epochs,
                    best.report.accuracy,
                    best.spec
                ))
            },
        )
    }
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String, PipelineError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| PipelineError::Compute(format!("json encoding: {e}")))
}

fn write_history(path: &Path, history: &[EpochStats]) -> Result<(), PipelineError> {
    write_history_io(path, history).map_err(|e| PipelineError::Data(e.to_string()))
}

fn write_history_io(path: &Path, history: &[EpochStats]) -> std::io::Result<()> {
    let mut out = Vec::new();
    for epoch in history {
        serde_json::to_writer(&mut out, epoch)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)
}

/// Signatures container: formula hash manifest plus ragged index/count
/// arrays (CSR-style offsets) and the vocabulary size.
fn save_signatures(
    path: &Path,
    vocab_size: usize,
    hashes: &[u64],
    signatures: &[SparseSignature],
) -> Result<(), PipelineError> {
    let mut offsets = Vec::with_capacity(signatures.len() + 1);
    let mut indices = Vec::new();
    let mut counts = Vec::new();
    offsets.push(0u64);
    for sig in signatures {
        for &(i, c) in sig.entries() {
            indices.push(i);
            counts.push(c);
        }
        offsets.push(indices.len() as u64);
    }
    let mut container = TensorContainer::new();
    container.push("vocab_size", TensorData::U32(vec![vocab_size as u32]));
    container.push("hashes", TensorData::U64(hashes.to_vec()));
    container.push("offsets", TensorData::U64(offsets));
    container.push("indices", TensorData::U32(indices));
    container.push("counts", TensorData::U32(counts));
    container.save(path)?;
    Ok(())
}

fn load_signatures(path: &Path) -> Result<(usize, Vec<u64>, Vec<SparseSignature>), PipelineError> {
    let container = TensorContainer::load(path)?;
    let inconsistent = || {
        PipelineError::Data(format!(
            "signature container {} is inconsistent",
            path.display()
        ))
    };
    let vocab_size = *container
        .u32_vec("vocab_size")?
        .first()
        .ok_or_else(inconsistent)? as usize;
    let hashes = container.u64_vec("hashes")?.to_vec();
    let offsets = container.u64_vec("offsets")?;
    let indices = container.u32_vec("indices")?;
    let counts = container.u32_vec("counts")?;
    if offsets.len() != hashes.len() + 1
        || indices.len() != counts.len()
        || offsets.last().copied() != Some(indices.len() as u64)
        || offsets.windows(2).any(|w| w[0] > w[1])
    {
        return Err(inconsistent());
    }
    let mut signatures = Vec::with_capacity(hashes.len());
    for w in offsets.windows(2) {
        let (start, end) = (w[0] as usize, w[1] as usize);
        let entries = indices[start..end]
            .iter()
            .copied()
            .zip(counts[start..end].iter().copied())
            .collect();
        signatures.push(SparseSignature::new(entries));
    }
    Ok((vocab_size, hashes, signatures))
}
