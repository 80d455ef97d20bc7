//! Central finite-difference verification of backpropagation.

use super::loss::{binary_crossentropy, categorical_crossentropy};
use super::tensor::Tensor2;
use super::train::TrainTargets;
use super::{BatchInput, DenseNetwork, LossKind, NnError, Result};

/// Compare the analytic gradient of the batch loss against central finite
/// differences `(L(p + h) - L(p - h)) / 2h` for every parameter, and return
/// the largest relative error
/// `|g_analytic - g_fd| / max(|g_analytic|, |g_fd|, 1e-12)`.
///
/// Meant for small 64-bit networks with dropout disabled; the batch should
/// stay tiny (a handful of rows) to keep the sweep cheap.
pub fn gradient_check(
    net: &mut DenseNetwork<f64>,
    loss_kind: LossKind,
    input: &Tensor2<f64>,
    targets: TrainTargets<f64>,
    h: f64,
) -> Result<f64> {
    let analytic = {
        let pass = net.forward_eval(BatchInput::Dense(input.clone()))?;
        let (_, logit_grad) = loss_value_and_grad(loss_kind, pass.output(), &targets)?;
        net.backward(&pass, &logit_grad)?
    };

    let mut max_rel = 0.0f64;
    let layer_count = net.layers().len();
    for l in 0..layer_count {
        let weight_len = net.layers()[l].weights.data().len();
        for i in 0..weight_len {
            let ga = analytic.weights[l].data()[i];
            let gf = central_difference(net, loss_kind, input, &targets, h, |n| {
                &mut n.layers_mut()[l].weights.data_mut()[i]
            })?;
            max_rel = max_rel.max(relative_error(ga, gf));
        }
        let bias_len = net.layers()[l].bias.len();
        for i in 0..bias_len {
            let ga = analytic.bias[l][i];
            let gf = central_difference(net, loss_kind, input, &targets, h, |n| {
                &mut n.layers_mut()[l].bias[i]
            })?;
            max_rel = max_rel.max(relative_error(ga, gf));
        }
    }
    Ok(max_rel)
}

fn central_difference(
    net: &mut DenseNetwork<f64>,
    loss_kind: LossKind,
    input: &Tensor2<f64>,
    targets: &TrainTargets<f64>,
    h: f64,
    param: impl Fn(&mut DenseNetwork<f64>) -> &mut f64,
) -> Result<f64> {
    let original = *param(net);
    *param(net) = original + h;
    let plus = loss_of(net, loss_kind, input, targets)?;
    *param(net) = original - h;
    let minus = loss_of(net, loss_kind, input, targets)?;
    *param(net) = original;
    Ok((plus - minus) / (2.0 * h))
}

fn loss_of(
    net: &DenseNetwork<f64>,
    loss_kind: LossKind,
    input: &Tensor2<f64>,
    targets: &TrainTargets<f64>,
) -> Result<f64> {
    let pass = net.forward_eval(BatchInput::Dense(input.clone()))?;
    let (loss, _) = loss_value_and_grad(loss_kind, pass.output(), targets)?;
    Ok(loss)
}

fn loss_value_and_grad(
    loss_kind: LossKind,
    pred: &Tensor2<f64>,
    targets: &TrainTargets<f64>,
) -> Result<(f64, Tensor2<f64>)> {
    match (loss_kind, targets) {
        (LossKind::CategoricalCrossEntropy, TrainTargets::Rows(rows)) => {
            categorical_crossentropy(pred, rows)
        }
        (LossKind::BinaryCrossEntropy, TrainTargets::Binary(labels)) => {
            binary_crossentropy(pred, labels)
        }
        _ => Err(NnError::Unsupported(
            "loss kind does not match target kind".into(),
        )),
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}
