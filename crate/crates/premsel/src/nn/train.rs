//! Batched, shuffled training loop with per-epoch metrics.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{bce_gathered, binary_accuracy, categorical_accuracy, cce_gathered};
use super::tensor::{Real, Tensor2};
use super::{Activation, BatchInput, DenseNetwork, LossKind, Mode, NnError, Optimizer, Result};

/// Training examples. `Dense` feeds rows of a feature matrix; `OneHot` feeds
/// one-hot vectors given by their hot index (the input matrix is never
/// materialized).
#[derive(Clone, Copy)]
pub enum TrainInputs<'a, T> {
    Dense(&'a Tensor2<T>),
    OneHot { dim: usize, indices: &'a [usize] },
}

impl<T: Real> TrainInputs<'_, T> {
    pub fn len(&self) -> usize {
        match self {
            TrainInputs::Dense(t) => t.rows(),
            TrainInputs::OneHot { indices, .. } => indices.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn batch(&self, example_ids: &[usize]) -> BatchInput<T> {
        match self {
            TrainInputs::Dense(t) => BatchInput::Dense(t.gather_rows(example_ids)),
            TrainInputs::OneHot { dim, indices } => BatchInput::OneHot {
                indices: example_ids.iter().map(|&j| indices[j]).collect(),
                dim: *dim,
            },
        }
    }
}

/// Per-example targets: distribution rows for the categorical loss, a 0/1
/// label column for the binary loss.
#[derive(Clone, Copy)]
pub enum TrainTargets<'a, T> {
    Rows(&'a Tensor2<T>),
    Binary(&'a [T]),
}

impl<T: Real> TrainTargets<'_, T> {
    pub fn len(&self) -> usize {
        match self {
            TrainTargets::Rows(t) => t.rows(),
            TrainTargets::Binary(labels) => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Report `wall_ms` as 0 so that histories and artifacts are
    /// byte-reproducible from the seed alone.
    pub deterministic: bool,
}

impl TrainOptions {
    pub fn new(epochs: usize, batch_size: usize) -> Self {
        TrainOptions {
            epochs,
            batch_size,
            deterministic: false,
        }
    }
}

/// One history line per epoch; serialized as JSON lines by the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub wall_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
}

/// Train `net` in place: per epoch, shuffle example order, then run
/// forward/backward/update over consecutive batches (the trailing short
/// batch is used, not dropped). Loss and accuracy are averaged over the
/// training passes; validation metrics, when a validation set is given, come
/// from mask-free eval passes after each epoch.
#[allow(clippy::too_many_arguments)]
pub fn train<T: Real, R: Rng>(
    net: &mut DenseNetwork<T>,
    inputs: TrainInputs<T>,
    targets: TrainTargets<T>,
    loss_kind: LossKind,
    opt: &mut Optimizer<T>,
    opts: &TrainOptions,
    rng: &mut R,
    validation: Option<(TrainInputs<T>, TrainTargets<T>)>,
) -> Result<Vec<EpochStats>> {
    let n = inputs.len();
    if n == 0 {
        return Err(NnError::Unsupported("empty training set".into()));
    }
    if opts.batch_size == 0 {
        return Err(NnError::Unsupported("batch size must be at least 1".into()));
    }
    if targets.len() != n {
        return Err(NnError::ShapeMismatch(format!(
            "{n} examples vs {} targets",
            targets.len()
        )));
    }
    check_pairing(net, loss_kind, &targets)?;

    let entry_mode = net.mode();
    net.set_mode(Mode::Train);
    let mut history = Vec::with_capacity(opts.epochs);
    let mut perm: Vec<usize> = (0..n).collect();

    for epoch in 0..opts.epochs {
        let started = Instant::now();
        perm.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut acc_sum = 0.0;

        for ids in perm.chunks(opts.batch_size) {
            let pass = net.forward(inputs.batch(ids), rng)?;
            let pred = pass.output();
            let (batch_loss, logit_grad) = batch_loss_grad(loss_kind, pred, &targets, ids)?;
            loss_sum += batch_loss.as_f64() * ids.len() as f64;
            acc_sum += batch_accuracy(pred, &targets, ids) * ids.len() as f64;
            let grads = net.backward(&pass, &logit_grad)?;
            opt.step(net, &grads)?;
        }

        let mut stats = EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / n as f64,
            accuracy: acc_sum / n as f64,
            wall_ms: 0,
            val_loss: None,
            val_accuracy: None,
        };
        if let Some((val_in, val_tgt)) = &validation {
            let (vl, va) = evaluate_set(net, *val_in, *val_tgt, loss_kind, opts.batch_size)?;
            stats.val_loss = Some(vl);
            stats.val_accuracy = Some(va);
        }
        if !opts.deterministic {
            stats.wall_ms = started.elapsed().as_millis() as u64;
        }
        history.push(stats);
    }

    net.set_mode(entry_mode);
    Ok(history)
}

/// Mean loss and accuracy of `net` over a dataset, in eval mode, batched.
pub fn evaluate_set<T: Real>(
    net: &DenseNetwork<T>,
    inputs: TrainInputs<T>,
    targets: TrainTargets<T>,
    loss_kind: LossKind,
    batch_size: usize,
) -> Result<(f64, f64)> {
    let n = inputs.len();
    if n == 0 {
        return Err(NnError::Unsupported("empty evaluation set".into()));
    }
    let ids: Vec<usize> = (0..n).collect();
    let mut loss_sum = 0.0;
    let mut acc_sum = 0.0;
    for chunk in ids.chunks(batch_size.max(1)) {
        let pass = net.forward_eval(inputs.batch(chunk))?;
        let pred = pass.output();
        let (batch_loss, _) = batch_loss_grad(loss_kind, pred, &targets, chunk)?;
        loss_sum += batch_loss.as_f64() * chunk.len() as f64;
        acc_sum += batch_accuracy(pred, &targets, chunk) * chunk.len() as f64;
    }
    Ok((loss_sum / n as f64, acc_sum / n as f64))
}

fn check_pairing<T: Real>(
    net: &DenseNetwork<T>,
    loss_kind: LossKind,
    targets: &TrainTargets<T>,
) -> Result<()> {
    let out_act = net.layers().last().unwrap().activation;
    match (loss_kind, targets) {
        (LossKind::CategoricalCrossEntropy, TrainTargets::Rows(rows)) => {
            if out_act != Activation::Softmax {
                return Err(NnError::Unsupported(
                    "categorical cross-entropy requires a softmax output layer".into(),
                ));
            }
            if rows.cols() != net.output_dim() {
                return Err(NnError::ShapeMismatch(format!(
                    "target rows of width {} vs output {}",
                    rows.cols(),
                    net.output_dim()
                )));
            }
        }
        (LossKind::BinaryCrossEntropy, TrainTargets::Binary(_)) => {
            if out_act != Activation::Sigmoid || net.output_dim() != 1 {
                return Err(NnError::Unsupported(
                    "binary cross-entropy requires a single sigmoid output".into(),
                ));
            }
        }
        _ => {
            return Err(NnError::Unsupported(
                "loss kind does not match target kind".into(),
            ));
        }
    }
    Ok(())
}

fn batch_loss_grad<T: Real>(
    loss_kind: LossKind,
    pred: &Tensor2<T>,
    targets: &TrainTargets<T>,
    ids: &[usize],
) -> Result<(T, Tensor2<T>)> {
    Ok(match (loss_kind, targets) {
        (LossKind::CategoricalCrossEntropy, TrainTargets::Rows(rows)) => {
            cce_gathered(pred, rows, Some(ids))
        }
        (LossKind::BinaryCrossEntropy, TrainTargets::Binary(labels)) => {
            bce_gathered(pred, labels, Some(ids))
        }
        _ => unreachable!("pairing checked before training"),
    })
}

fn batch_accuracy<T: Real>(pred: &Tensor2<T>, targets: &TrainTargets<T>, ids: &[usize]) -> f64 {
    match targets {
        TrainTargets::Rows(rows) => categorical_accuracy(pred, rows, Some(ids)),
        TrainTargets::Binary(labels) => binary_accuracy(pred, labels, Some(ids)),
    }
}
