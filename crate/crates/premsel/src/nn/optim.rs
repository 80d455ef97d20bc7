//! RMSprop and Adam parameter updates.

use super::tensor::Real;
use super::{DenseNetwork, Gradients, NnError, Result};

/// Optimizer family plus hyperparameters (held in `f64`, applied in the
/// network's scalar type).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    RmsProp {
        lr: f64,
        rho: f64,
        eps: f64,
        /// Multiplicative learning-rate schedule `lr / (1 + decay * t)`
        /// where `t` counts completed optimizer steps.
        decay: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerKind {
    /// RMSprop with lr 1e-3, rho 0.9, eps 1e-8 and schedule decay 1e-8.
    pub fn rmsprop_default() -> Self {
        OptimizerKind::RmsProp {
            lr: 1e-3,
            rho: 0.9,
            eps: 1e-8,
            decay: 1e-8,
        }
    }

    /// Adam with beta1 0.9, beta2 0.999, eps 1e-8.
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Scheduled RMSprop learning rate after `steps` completed steps.
pub fn rmsprop_scheduled_lr(lr: f64, decay: f64, steps: u64) -> f64 {
    lr / (1.0 + decay * steps as f64)
}

/// Optimizer state: one accumulator per parameter tensor for RMSprop, two
/// (first/second moment) plus the step counter for Adam.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    step: u64,
    // Flat slots in layer order: [w0, b0, w1, b1, ...].
    slot_a: Vec<Vec<T>>,
    slot_b: Vec<Vec<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, net: &DenseNetwork<T>) -> Self {
        let mut slot_a = Vec::new();
        for layer in net.layers() {
            slot_a.push(vec![T::zero(); layer.weights.data().len()]);
            slot_a.push(vec![T::zero(); layer.bias.len()]);
        }
        let slot_b = match kind {
            OptimizerKind::Adam { .. } => slot_a.clone(),
            OptimizerKind::RmsProp { .. } => Vec::new(),
        };
        Optimizer {
            kind,
            step: 0,
            slot_a,
            slot_b,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Completed update steps.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Apply one update step to every parameter of `net` from `grads`.
    pub fn step(&mut self, net: &mut DenseNetwork<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.weights.len() != net.layers().len() || grads.bias.len() != net.layers().len() {
            return Err(NnError::ShapeMismatch(
                "gradients do not match network layers".into(),
            ));
        }
        for (l, layer) in net.layers().iter().enumerate() {
            if grads.weights[l].rows() != layer.weights.rows()
                || grads.weights[l].cols() != layer.weights.cols()
                || grads.bias[l].len() != layer.bias.len()
            {
                return Err(NnError::ShapeMismatch(format!(
                    "gradient shapes differ from layer {l}"
                )));
            }
        }

        match self.kind {
            OptimizerKind::RmsProp {
                lr,
                rho,
                eps,
                decay,
            } => {
                let hp = RmsPropStep {
                    lr_t: T::from_f64(rmsprop_scheduled_lr(lr, decay, self.step)),
                    rho: T::from_f64(rho),
                    eps: T::from_f64(eps),
                };
                for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                    rmsprop_update(
                        layer.weights.data_mut(),
                        grads.weights[l].data(),
                        &mut self.slot_a[2 * l],
                        &hp,
                    );
                    rmsprop_update(
                        &mut layer.bias,
                        &grads.bias[l],
                        &mut self.slot_a[2 * l + 1],
                        &hp,
                    );
                }
            }
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step + 1;
                let hp = AdamStep {
                    lr: T::from_f64(lr),
                    beta1: T::from_f64(beta1),
                    beta2: T::from_f64(beta2),
                    eps: T::from_f64(eps),
                    inv_bias1: T::from_f64(1.0 / (1.0 - beta1.powi(t as i32))),
                    inv_bias2: T::from_f64(1.0 / (1.0 - beta2.powi(t as i32))),
                };
                for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                    adam_update(
                        layer.weights.data_mut(),
                        grads.weights[l].data(),
                        &mut self.slot_a[2 * l],
                        &mut self.slot_b[2 * l],
                        &hp,
                    );
                    adam_update(
                        &mut layer.bias,
                        &grads.bias[l],
                        &mut self.slot_a[2 * l + 1],
                        &mut self.slot_b[2 * l + 1],
                        &hp,
                    );
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}

struct RmsPropStep<T> {
    lr_t: T,
    rho: T,
    eps: T,
}

fn rmsprop_update<T: Real>(params: &mut [T], grad: &[T], acc: &mut [T], hp: &RmsPropStep<T>) {
    let one_minus_rho = T::one() - hp.rho;
    for ((p, &g), a) in params.iter_mut().zip(grad).zip(acc.iter_mut()) {
        *a = hp.rho * *a + one_minus_rho * g * g;
        *p -= hp.lr_t * g / (a.sqrt() + hp.eps);
    }
}

struct AdamStep<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    inv_bias1: T,
    inv_bias2: T,
}

fn adam_update<T: Real>(params: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], hp: &AdamStep<T>) {
    let one_minus_b1 = T::one() - hp.beta1;
    let one_minus_b2 = T::one() - hp.beta2;
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grad)
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = hp.beta1 * *m + one_minus_b1 * g;
        *v = hp.beta2 * *v + one_minus_b2 * g * g;
        let m_hat = *m * hp.inv_bias1;
        let v_hat = *v * hp.inv_bias2;
        *p -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}
