//! Labelled (conjecture, axiom) pair vectors: assembly from cached
//! embeddings, train/test splitting, and column standardization.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::embedding::EmbeddingCache;
use crate::nn::{Tensor2, TensorContainer, TensorData};
use crate::tptp::RawExampleBlock;

#[derive(Debug, Error, PartialEq)]
pub enum PairError {
    #[error("no cached embedding for formula {formula:?}")]
    MissingEmbedding { formula: String },
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("split would leave an empty side ({train} train / {test} test)")]
    DegenerateSplit { train: usize, test: usize },
    #[error("standardization needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// One classifier example: conjecture embedding followed by axiom embedding,
/// with a 0/1 relevance label.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub features: Vec<f32>,
    pub label: u8,
}

/// Build one example per (conjecture, positive) with label 1 and per
/// (conjecture, negative) with label 0, in block order (positives first
/// within each block). The conjecture embedding occupies the leading
/// coordinates.
pub fn build_pairs(
    blocks: &[RawExampleBlock],
    cache: &EmbeddingCache,
) -> Result<Vec<PairExample>, PairError> {
    let lookup = |formula: &str| {
        cache
            .get(formula)
            .ok_or_else(|| PairError::MissingEmbedding {
                formula: formula.to_string(),
            })
    };
    let mut examples = Vec::new();
    for block in blocks {
        let conjecture = lookup(&block.conjecture)?;
        for (axioms, label) in [(&block.positives, 1u8), (&block.negatives, 0u8)] {
            for axiom in axioms.iter() {
                let axiom_embedding = lookup(axiom)?;
                let mut features = Vec::with_capacity(conjecture.len() + axiom_embedding.len());
                features.extend_from_slice(conjecture);
                features.extend_from_slice(axiom_embedding);
                examples.push(PairExample { features, label });
            }
        }
    }
    Ok(examples)
}

/// Train/test sizes for a fraction `f`: `floor((1 - f) * n)` training rows,
/// the rest test (so the test side is `ceil(f * n)`).
pub fn split_counts(n: usize, test_fraction: f64) -> (usize, usize) {
    let train = ((1.0 - test_fraction) * n as f64).floor() as usize;
    (train, n - train)
}

/// Seeded uniform partition without replacement.
pub fn split<R: Rng>(
    examples: Vec<PairExample>,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<PairExample>, Vec<PairExample>), PairError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(PairError::InvalidFraction(test_fraction));
    }
    let n = examples.len();
    let (train_n, test_n) = split_counts(n, test_fraction);
    if train_n == 0 || test_n == 0 {
        return Err(PairError::DegenerateSplit {
            train: train_n,
            test: test_n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut slots: Vec<Option<PairExample>> = examples.into_iter().map(Some).collect();
    let take = |slots: &mut Vec<Option<PairExample>>, ids: &[usize]| {
        ids.iter()
            .map(|&i| slots[i].take().expect("each index taken once"))
            .collect::<Vec<_>>()
    };
    let train = take(&mut slots, &order[..train_n]);
    let test = take(&mut slots, &order[train_n..]);
    Ok((train, test))
}

/// Dense feature matrix plus label column, the classifier's working form.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrix {
    pub features: Tensor2<f32>,
    pub labels: Vec<f32>,
}

impl PairMatrix {
    pub fn from_examples(examples: &[PairExample]) -> Self {
        let dim = examples.first().map_or(0, |e| e.features.len());
        let mut features = Tensor2::zeros(examples.len(), dim);
        let mut labels = Vec::with_capacity(examples.len());
        for (row, example) in examples.iter().enumerate() {
            features.row_mut(row).copy_from_slice(&example.features);
            labels.push(example.label as f32);
        }
        PairMatrix { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Container layout: one `data` matrix of `rows x (dim + 1)` with the
    /// label as the trailing column.
    pub fn to_container(&self) -> TensorContainer {
        let rows = self.len();
        let dim = self.dim();
        let mut data = Vec::with_capacity(rows * (dim + 1));
        for r in 0..rows {
            data.extend_from_slice(self.features.row(r));
            data.push(self.labels[r]);
        }
        let mut c = TensorContainer::new();
        c.push(
            "data",
            TensorData::F32 {
                rows,
                cols: dim + 1,
                data,
            },
        );
        c
    }

    pub fn from_container(container: &TensorContainer) -> Result<Self, PairError> {
        let (rows, cols, data) = container
            .f32_matrix("data")
            .map_err(|e| PairError::ShapeMismatch(e.to_string()))?;
        if cols == 0 {
            return Err(PairError::ShapeMismatch(
                "pair matrix has no columns".into(),
            ));
        }
        let dim = cols - 1;
        let mut features = Tensor2::zeros(rows, dim);
        let mut labels = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &data[r * cols..(r + 1) * cols];
            features.row_mut(r).copy_from_slice(&row[..dim]);
            labels.push(row[dim]);
        }
        Ok(PairMatrix { features, labels })
    }
}

/// Per-column population mean and standard deviation of the training rows.
/// Exactly constant columns are flagged and standardize to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
    pub constant: Vec<bool>,
}

/// Population statistics (divisor `N`), accumulated in `f64`.
pub fn fit_standardizer(rows: &Tensor2<f32>) -> Result<StandardizationStats, PairError> {
    let n = rows.rows();
    if n < 2 {
        return Err(PairError::TooFewRows(n));
    }
    let cols = rows.cols();
    let mut mean = vec![0.0f64; cols];
    let mut min = vec![f32::INFINITY; cols];
    let mut max = vec![f32::NEG_INFINITY; cols];
    for r in 0..n {
        for (c, &v) in rows.row(r).iter().enumerate() {
            mean[c] += v as f64;
            min[c] = min[c].min(v);
            max[c] = max[c].max(v);
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0f64; cols];
    for r in 0..n {
        for (c, &v) in rows.row(r).iter().enumerate() {
            let d = v as f64 - mean[c];
            var[c] += d * d;
        }
    }
    let mut std = Vec::with_capacity(cols);
    let mut constant = Vec::with_capacity(cols);
    for c in 0..cols {
        if min[c] == max[c] {
            std.push(0.0);
            constant.push(true);
        } else {
            std.push((var[c] / n as f64).sqrt() as f32);
            constant.push(false);
        }
    }
    Ok(StandardizationStats {
        mean: mean.into_iter().map(|m| m as f32).collect(),
        std,
        constant,
    })
}

/// `x' = (x - mean) / std` per column; flagged constant columns divide by 1,
/// leaving them at zero for the rows the stats were fit on.
pub fn apply_standardizer(
    stats: &StandardizationStats,
    rows: &mut Tensor2<f32>,
) -> Result<(), PairError> {
    if rows.cols() != stats.mean.len() {
        return Err(PairError::ShapeMismatch(format!(
            "{} columns vs {} statistics",
            rows.cols(),
            stats.mean.len()
        )));
    }
    let divisor: Vec<f32> = stats
        .std
        .iter()
        .zip(&stats.constant)
        .map(|(&s, &flagged)| if flagged { 1.0 } else { s })
        .collect();
    for r in 0..rows.rows() {
        for (c, v) in rows.row_mut(r).iter_mut().enumerate() {
            *v = (*v - stats.mean[c]) / divisor[c];
        }
    }
    Ok(())
}

impl StandardizationStats {
    pub fn to_container(&self) -> TensorContainer {
        let mut c = TensorContainer::new();
        c.push(
            "mean",
            TensorData::F32 {
                rows: self.mean.len(),
                cols: 1,
                data: self.mean.clone(),
            },
        );
        c.push(
            "std",
            TensorData::F32 {
                rows: self.std.len(),
                cols: 1,
                data: self.std.clone(),
            },
        );
        c.push(
            "constant",
            TensorData::U32(self.constant.iter().map(|&b| b as u32).collect()),
        );
        c
    }

    pub fn from_container(container: &TensorContainer) -> Result<Self, PairError> {
        let to_err = |e: crate::nn::NnError| PairError::ShapeMismatch(e.to_string());
        let (_, _, mean) = container.f32_matrix("mean").map_err(to_err)?;
        let (_, _, std) = container.f32_matrix("std").map_err(to_err)?;
        let constant = container.u32_vec("constant").map_err(to_err)?;
        Ok(StandardizationStats {
            mean: mean.to_vec(),
            std: std.to_vec(),
            constant: constant.iter().map(|&b| b != 0).collect(),
        })
    }
}
