//! Context-prediction training and low-dimensional signature embeddings.
//!
//! The context model is a two-layer net `n -> n' (tanh) -> n (softmax)`
//! trained to map each functor's one-hot vector to that functor's context
//! distribution. A formula's embedding is the hidden activation of its raw
//! count vector, computed sparsely: `tanh(W1 * sig + b1)`.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::hashes::fnv1a64;
use crate::nn::{
    train, Activation, DenseLayer, DenseNetwork, EpochStats, LossKind, NnError, Optimizer,
    OptimizerKind, Real, Tensor2, TensorContainer, TensorData, TrainInputs, TrainOptions,
    TrainTargets,
};
use crate::signatures::SparseSignature;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("signature index {index} outside vocabulary of size {n}")]
    IndexOutOfRange { index: u32, n: usize },
    #[error("formula {position} has an empty signature and no normalizable target")]
    ZeroSignature { position: usize },
    #[error("not a context model: {0}")]
    BadModel(String),
    #[error("formula missing from the embedding cache (hash {hash:#018x})")]
    MissingEmbedding { hash: u64 },
    #[error(transparent)]
    Net(#[from] NnError),
}

/// Two-layer context-prediction network; the first layer holds the
/// embedding parameters `W1`, `b1`.
#[derive(Debug, Clone)]
pub struct ContextModel<T: Real = f32> {
    net: DenseNetwork<T>,
}

impl<T: Real> ContextModel<T> {
    pub fn new(net: DenseNetwork<T>) -> Result<Self, EmbedError> {
        if net.layers().len() != 2 {
            return Err(EmbedError::BadModel("expected exactly two layers".into()));
        }
        let hidden = &net.layers()[0];
        let out = &net.layers()[1];
        if hidden.activation != Activation::Tanh || out.activation != Activation::Softmax {
            return Err(EmbedError::BadModel("expected tanh then softmax".into()));
        }
        if hidden.input_dim() != out.output_dim() {
            return Err(EmbedError::BadModel("input and output dims differ".into()));
        }
        if hidden.output_dim() >= hidden.input_dim() {
            return Err(EmbedError::BadModel(
                "embedding dim must be smaller than the vocabulary".into(),
            ));
        }
        Ok(ContextModel { net })
    }

    /// Vocabulary size `n`.
    pub fn n(&self) -> usize {
        self.net.input_dim()
    }

    /// Embedding dimension `n'`.
    pub fn n_prime(&self) -> usize {
        self.net.layers()[0].output_dim()
    }

    pub fn net(&self) -> &DenseNetwork<T> {
        &self.net
    }

    pub fn into_net(self) -> DenseNetwork<T> {
        self.net
    }

    fn hidden(&self) -> &DenseLayer<T> {
        &self.net.layers()[0]
    }

    pub fn cast<U: Real>(&self) -> ContextModel<U> {
        ContextModel {
            net: self.net.cast(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmbedOptions {
    pub n_prime: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub deterministic: bool,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            n_prime: 256,
            epochs: 150,
            batch_size: 4096,
            deterministic: false,
        }
    }
}

/// Train the context model: inputs are the one-hot functor vectors (fed as
/// column selections of `W1`, which is what multiplying by the identity
/// matrix amounts to), targets are the context-distribution rows, loss is
/// categorical cross-entropy under RMSprop. No validation split; the model
/// is meant to fit these `n` fixed points as tightly as it can.
pub fn train_context_model<R: Rng>(
    context_rows: &Tensor2<f32>,
    opts: &EmbedOptions,
    rng: &mut R,
) -> Result<(ContextModel<f32>, Vec<EpochStats>), EmbedError> {
    let n = context_rows.rows();
    if context_rows.cols() != n {
        return Err(EmbedError::BadModel(format!(
            "context matrix is {}x{}, expected square",
            context_rows.rows(),
            context_rows.cols()
        )));
    }
    if opts.n_prime >= n {
        return Err(EmbedError::BadModel(format!(
            "embedding dim {} must be below vocabulary size {n}",
            opts.n_prime
        )));
    }
    let layers = vec![
        DenseLayer::he_uniform(n, opts.n_prime, Activation::Tanh, rng),
        DenseLayer::he_uniform(opts.n_prime, n, Activation::Softmax, rng),
    ];
    let mut net = DenseNetwork::new(layers, vec![0.0, 0.0])?;
    let mut opt = Optimizer::new(OptimizerKind::rmsprop_default(), &net);
    let indices: Vec<usize> = (0..n).collect();
    let mut train_opts = TrainOptions::new(opts.epochs, opts.batch_size);
    train_opts.deterministic = opts.deterministic;
    let history = train(
        &mut net,
        TrainInputs::OneHot {
            dim: n,
            indices: &indices,
        },
        TrainTargets::Rows(context_rows),
        LossKind::CategoricalCrossEntropy,
        &mut opt,
        &train_opts,
        rng,
        None,
    )?;
    Ok((ContextModel::new(net)?, history))
}

/// Autoencoder alternative: same architecture, raw count vectors in,
/// L1-normalized count vectors as softmax-compatible targets. The returned
/// model embeds signatures exactly like a context model.
pub fn train_autoencoder<R: Rng>(
    signatures: &[SparseSignature],
    n: usize,
    opts: &EmbedOptions,
    rng: &mut R,
) -> Result<(ContextModel<f32>, Vec<EpochStats>), EmbedError> {
    if let Some(position) = signatures.iter().position(SparseSignature::is_empty) {
        return Err(EmbedError::ZeroSignature { position });
    }
    if opts.n_prime >= n {
        return Err(EmbedError::BadModel(format!(
            "embedding dim {} must be below vocabulary size {n}",
            opts.n_prime
        )));
    }
    let mut inputs = Tensor2::zeros(signatures.len(), n);
    let mut targets = Tensor2::zeros(signatures.len(), n);
    for (row, sig) in signatures.iter().enumerate() {
        let total = sig.total() as f32;
        for &(i, c) in sig.entries() {
            if i as usize >= n {
                return Err(EmbedError::IndexOutOfRange { index: i, n });
            }
            inputs.set(row, i as usize, c as f32);
            targets.set(row, i as usize, c as f32 / total);
        }
    }
    let layers = vec![
        DenseLayer::he_uniform(n, opts.n_prime, Activation::Tanh, rng),
        DenseLayer::he_uniform(opts.n_prime, n, Activation::Softmax, rng),
    ];
    let mut net = DenseNetwork::new(layers, vec![0.0, 0.0])?;
    let mut opt = Optimizer::new(OptimizerKind::rmsprop_default(), &net);
    let mut train_opts = TrainOptions::new(opts.epochs, opts.batch_size);
    train_opts.deterministic = opts.deterministic;
    let history = train(
        &mut net,
        TrainInputs::Dense(&inputs),
        TrainTargets::Rows(&targets),
        LossKind::CategoricalCrossEntropy,
        &mut opt,
        &train_opts,
        rng,
        None,
    )?;
    Ok((ContextModel::new(net)?, history))
}

/// Hidden pre-activation `W1 * sig + b1`, computed sparsely as
/// `b1 + sum_k count_k * column_k(W1)`.
pub fn embed_preactivation<T: Real>(
    model: &ContextModel<T>,
    sig: &SparseSignature,
) -> Result<Vec<T>, EmbedError> {
    let hidden = model.hidden();
    let n = model.n();
    let mut pre: Vec<T> = hidden.bias.clone();
    for &(k, count) in sig.entries() {
        if k as usize >= n {
            return Err(EmbedError::IndexOutOfRange { index: k, n });
        }
        let c = T::from_f64(count as f64);
        for (o, p) in pre.iter_mut().enumerate() {
            *p += c * hidden.weights.get(o, k as usize);
        }
    }
    Ok(pre)
}

/// The production embedding `tanh(W1 * sig + b1)`; every coordinate lies
/// strictly inside (-1, 1).
pub fn embed_signature<T: Real>(
    model: &ContextModel<T>,
    sig: &SparseSignature,
) -> Result<Vec<T>, EmbedError> {
    let mut pre = embed_preactivation(model, sig)?;
    for v in &mut pre {
        *v = v.tanh();
    }
    Ok(pre)
}

/// Comparison-only variant `sum_k count_k * tanh(W1 e_k + b1)`; unlike
/// [`embed_signature`] its entries are not bounded by (-1, 1).
pub fn embed_signature_summed<T: Real>(
    model: &ContextModel<T>,
    sig: &SparseSignature,
) -> Result<Vec<T>, EmbedError> {
    let hidden = model.hidden();
    let n = model.n();
    let n_prime = model.n_prime();
    let mut out = vec![T::zero(); n_prime];
    for &(k, count) in sig.entries() {
        if k as usize >= n {
            return Err(EmbedError::IndexOutOfRange { index: k, n });
        }
        let c = T::from_f64(count as f64);
        for (o, acc) in out.iter_mut().enumerate() {
            let term = (hidden.weights.get(o, k as usize) + hidden.bias[o]).tanh();
            *acc += c * term;
        }
    }
    Ok(out)
}

/// Precomputed embeddings of every unique formula, keyed by the 64-bit
/// FNV-1a hash of the formula string.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dim: usize,
    hashes: Vec<u64>,
    index: HashMap<u64, u32>,
    vectors: Tensor2<f32>,
}

impl EmbeddingCache {
    /// Embed each formula's signature with the model. `formulas` and
    /// `signatures` run in parallel.
    pub fn build(
        model: &ContextModel<f32>,
        formulas: &[String],
        signatures: &[SparseSignature],
    ) -> Result<Self, EmbedError> {
        let hashes: Vec<u64> = formulas.iter().map(|f| fnv1a64(f.as_bytes())).collect();
        Self::build_hashed(model, &hashes, signatures)
    }

    /// As [`EmbeddingCache::build`] with precomputed formula hashes.
    pub fn build_hashed(
        model: &ContextModel<f32>,
        hashes: &[u64],
        signatures: &[SparseSignature],
    ) -> Result<Self, EmbedError> {
        assert_eq!(hashes.len(), signatures.len());
        let dim = model.n_prime();
        let mut vectors = Tensor2::zeros(hashes.len(), dim);
        let mut index = HashMap::with_capacity(hashes.len());
        for (row, (&hash, sig)) in hashes.iter().zip(signatures).enumerate() {
            let embedded = embed_signature(model, sig)?;
            vectors.row_mut(row).copy_from_slice(&embedded);
            index.insert(hash, row as u32);
        }
        Ok(EmbeddingCache {
            dim,
            hashes: hashes.to_vec(),
            index,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, formula: &str) -> Option<&[f32]> {
        let row = *self.index.get(&fnv1a64(formula.as_bytes()))?;
        Some(self.vectors.row(row as usize))
    }

    /// Container layout: `hashes` (manifest order) plus one dense vector
    /// per formula in `vectors`.
    pub fn to_container(&self) -> TensorContainer {
        let mut c = TensorContainer::new();
        c.push("hashes", TensorData::U64(self.hashes.clone()));
        c.push(
            "vectors",
            TensorData::F32 {
                rows: self.vectors.rows(),
                cols: self.vectors.cols(),
                data: self.vectors.data().to_vec(),
            },
        );
        c
    }

    pub fn from_container(container: &TensorContainer) -> Result<Self, EmbedError> {
        let hashes = container.u64_vec("hashes")?.to_vec();
        let (rows, cols, data) = container.f32_matrix("vectors")?;
        if rows != hashes.len() {
            return Err(EmbedError::BadModel(
                "embedding cache hash manifest does not match vector rows".into(),
            ));
        }
        let index = hashes
            .iter()
            .enumerate()
            .map(|(i, &h)| (h, i as u32))
            .collect();
        Ok(EmbeddingCache {
            dim: cols,
            hashes,
            index,
            vectors: Tensor2::from_vec(rows, cols, data.to_vec()),
        })
    }
}
