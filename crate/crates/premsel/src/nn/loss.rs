//! Cross-entropy losses with gradients fused through the output activation,
//! and accuracy metrics.

use super::tensor::{Real, Tensor2};
use super::{NnError, Result};

/// Probability clamp for the logarithms in both losses.
pub const LOSS_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Categorical cross-entropy, fused with a softmax output layer.
    CategoricalCrossEntropy,
    /// Binary (logistic) cross-entropy, fused with a sigmoid output layer.
    BinaryCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Binary,
    Categorical,
}

/// Mean categorical cross-entropy of probability rows `pred` against target
/// distribution rows, plus the gradient with respect to the pre-softmax
/// logits: `(pred - target) / batch`.
pub fn categorical_crossentropy<T: Real>(
    pred: &Tensor2<T>,
    target: &Tensor2<T>,
) -> Result<(T, Tensor2<T>)> {
    if pred.rows() != target.rows() || pred.cols() != target.cols() {
        return Err(NnError::ShapeMismatch(format!(
            "pred {}x{} vs target {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    Ok(cce_gathered(pred, target, None))
}

/// As [`categorical_crossentropy`] with target row `j` read from
/// `target.row(indices[j])`; avoids materializing gathered batches.
pub(crate) fn cce_gathered<T: Real>(
    pred: &Tensor2<T>,
    target: &Tensor2<T>,
    indices: Option<&[usize]>,
) -> (T, Tensor2<T>) {
    let batch = pred.rows();
    let inv_batch = T::from_f64(1.0 / batch as f64);
    let eps = T::from_f64(LOSS_CLAMP);
    let mut grad = Tensor2::zeros(batch, pred.cols());
    let mut loss = T::zero();
    for b in 0..batch {
        let t_row = target.row(indices.map_or(b, |ix| ix[b]));
        let p_row = pred.row(b);
        let g_row = grad.row_mut(b);
        let mut row_loss = T::zero();
        for ((&p, &t), g) in p_row.iter().zip(t_row).zip(g_row.iter_mut()) {
            if t != T::zero() {
                let clamped = p.max(eps).min(T::one());
                row_loss -= t * clamped.ln();
            }
            *g = (p - t) * inv_batch;
        }
        loss += row_loss;
    }
    (loss * inv_batch, grad)
}

/// Mean logistic loss of a single-column prediction in `(0,1)` against 0/1
/// labels, plus the gradient with respect to the pre-sigmoid logit:
/// `(p - y) / batch`.
pub fn binary_crossentropy<T: Real>(pred: &Tensor2<T>, labels: &[T]) -> Result<(T, Tensor2<T>)> {
    if pred.cols() != 1 || pred.rows() != labels.len() {
        return Err(NnError::ShapeMismatch(format!(
            "pred {}x{} vs {} labels",
            pred.rows(),
            pred.cols(),
            labels.len()
        )));
    }
    Ok(bce_gathered(pred, labels, None))
}

pub(crate) fn bce_gathered<T: Real>(
    pred: &Tensor2<T>,
    labels: &[T],
    indices: Option<&[usize]>,
) -> (T, Tensor2<T>) {
    let batch = pred.rows();
    let inv_batch = T::from_f64(1.0 / batch as f64);
    let eps = T::from_f64(LOSS_CLAMP);
    let one = T::one();
    let mut grad = Tensor2::zeros(batch, 1);
    let mut loss = T::zero();
    for b in 0..batch {
        let y = labels[indices.map_or(b, |ix| ix[b])];
        let p = pred.get(b, 0);
        let clamped = p.max(eps).min(one - eps);
        loss -= y * clamped.ln() + (one - y) * (one - clamped).ln();
        grad.set(b, 0, (p - y) * inv_batch);
    }
    (loss * inv_batch, grad)
}

/// Fraction of correct predictions.
///
/// Binary: prediction is positive when `p >= 0.5` (ties count positive).
/// Categorical: the argmax of the prediction row must equal the argmax of
/// the target row; ties break toward the lowest index.
pub fn accuracy<T: Real>(pred: &Tensor2<T>, target: &Tensor2<T>, task: TaskKind) -> Result<f64> {
    if pred.rows() != target.rows() {
        return Err(NnError::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            pred.rows(),
            target.rows()
        )));
    }
    match task {
        TaskKind::Binary => {
            if pred.cols() != 1 || target.cols() != 1 {
                return Err(NnError::ShapeMismatch(
                    "binary task needs single columns".into(),
                ));
            }
            let labels: Vec<T> = (0..target.rows()).map(|b| target.get(b, 0)).collect();
            Ok(binary_accuracy(pred, &labels, None))
        }
        TaskKind::Categorical => {
            if pred.cols() != target.cols() {
                return Err(NnError::ShapeMismatch("column count mismatch".into()));
            }
            Ok(categorical_accuracy(pred, target, None))
        }
    }
}

pub fn binary_accuracy<T: Real>(pred: &Tensor2<T>, labels: &[T], indices: Option<&[usize]>) -> f64 {
    let half = T::from_f64(0.5);
    let mut correct = 0usize;
    for b in 0..pred.rows() {
        let y = labels[indices.map_or(b, |ix| ix[b])];
        let positive = pred.get(b, 0) >= half;
        if positive == (y >= half) {
            correct += 1;
        }
    }
    correct as f64 / pred.rows() as f64
}

pub fn categorical_accuracy<T: Real>(
    pred: &Tensor2<T>,
    target: &Tensor2<T>,
    indices: Option<&[usize]>,
) -> f64 {
    let mut correct = 0usize;
    for b in 0..pred.rows() {
        let t_row = target.row(indices.map_or(b, |ix| ix[b]));
        if argmax(pred.row(b)) == argmax(t_row) {
            correct += 1;
        }
    }
    correct as f64 / pred.rows() as f64
}

/// Index of the maximum entry; ties break toward the lowest index.
fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    let mut best_v = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
