//! A small dense neural-network engine.
//!
//! Supports exactly what the premise-selection models need: stacks of affine
//! layers with elementwise activations (softmax row-wise), inverted dropout,
//! fused softmax/sigmoid cross-entropy losses, RMSprop and Adam, a batched
//! training loop, finite-difference gradient checking and binary
//! serialization. No convolution, recurrence or general autodiff.

pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod optim;
pub mod tensor;
pub mod train;

pub use gradcheck::gradient_check;
pub use io::{load_model, save_model, TensorContainer, TensorData};
pub use loss::{
    accuracy, binary_accuracy, binary_crossentropy, categorical_accuracy, categorical_crossentropy,
    LossKind, TaskKind,
};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::{Real, Tensor2};
pub use train::{train, EpochStats, TrainInputs, TrainOptions, TrainTargets};

use rand::Rng;
use thiserror::Error;

use tensor::{axpy, dot};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("forward cache does not match the network or gradient shapes")]
    StaleCache,
    #[error("dropout in train mode requires a random generator")]
    DropoutNeedsRng,
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes (not a recognized file)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    VersionMismatch(u32),
    #[error("checksum mismatch (file corrupted or truncated)")]
    ChecksumMismatch,
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Elementwise activation; `Softmax` is applied row-wise and is only valid
/// as the final layer (its gradient is fused into the categorical loss).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
            Activation::Sigmoid => 3,
            Activation::Softmax => 4,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Identity,
            1 => Activation::Tanh,
            2 => Activation::Relu,
            3 => Activation::Sigmoid,
            4 => Activation::Softmax,
            _ => return None,
        })
    }

    pub(crate) fn apply<T: Real>(self, t: &mut Tensor2<T>) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => {
                for v in t.data_mut() {
                    *v = v.tanh();
                }
            }
            Activation::Relu => {
                for v in t.data_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            Activation::Sigmoid => {
                for v in t.data_mut() {
                    *v = T::one() / (T::one() + (-*v).exp());
                }
            }
            Activation::Softmax => {
                // Max-subtraction per row for overflow safety.
                for r in 0..t.rows() {
                    let row = t.row_mut(r);
                    let mut max = row[0];
                    for &v in row.iter() {
                        if v > max {
                            max = v;
                        }
                    }
                    let mut sum = T::zero();
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                }
            }
        }
    }

    /// Multiply `g` in place by the activation derivative, computed from the
    /// activation *output* `y`.
    fn backprop_through<T: Real>(self, g: &mut Tensor2<T>, y: &Tensor2<T>) -> Result<()> {
        match self {
            Activation::Identity => {}
            Activation::Tanh => {
                for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                    *gv *= T::one() - yv * yv;
                }
            }
            Activation::Relu => {
                for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                    if yv <= T::zero() {
                        *gv = T::zero();
                    }
                }
            }
            Activation::Sigmoid => {
                for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                    *gv = *gv * yv * (T::one() - yv);
                }
            }
            Activation::Softmax => {
                return Err(NnError::Unsupported(
                    "softmax is only supported as the output layer".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Uniform He initialization: i.i.d. samples in `[-L, L]` with
/// `L = sqrt(6 / fan_in)`, `fan_in = cols`.
pub fn he_uniform_init<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor2<T> {
    assert!(rows >= 1 && cols >= 1);
    let bound = (6.0 / cols as f64).sqrt();
    let mut t = Tensor2::zeros(rows, cols);
    for v in t.data_mut() {
        *v = T::from_f64(rng.gen_range(-bound..bound));
    }
    t
}

/// One affine layer: `activation(x · Wᵀ + b)` with `W` stored `out × in`.
#[derive(Debug, Clone)]
pub struct DenseLayer<T> {
    pub weights: Tensor2<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> DenseLayer<T> {
    /// He-uniform weights, zero bias.
    pub fn he_uniform<R: Rng>(
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        DenseLayer {
            weights: he_uniform_init(output, input, rng),
            bias: vec![T::zero(); output],
            activation,
        }
    }

    pub fn from_parts(weights: Tensor2<T>, bias: Vec<T>, activation: Activation) -> Self {
        assert_eq!(
            bias.len(),
            weights.rows(),
            "bias length must equal output dim"
        );
        DenseLayer {
            weights,
            bias,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    fn affine(&self, x: &Tensor2<T>) -> Tensor2<T> {
        let mut out = Tensor2::zeros(x.rows(), self.output_dim());
        for b in 0..x.rows() {
            let xr = x.row(b);
            let or = out.row_mut(b);
            for (o, ov) in or.iter_mut().enumerate() {
                *ov = dot(xr, self.weights.row(o)) + self.bias[o];
            }
        }
        out
    }

    /// Affine map of one-hot rows: row `b` of the result is
    /// `W column indices[b] + bias`, without materializing the input.
    fn affine_one_hot(&self, indices: &[usize]) -> Tensor2<T> {
        let mut out = Tensor2::zeros(indices.len(), self.output_dim());
        for (b, &k) in indices.iter().enumerate() {
            let or = out.row_mut(b);
            for (o, ov) in or.iter_mut().enumerate() {
                *ov = self.weights.get(o, k) + self.bias[o];
            }
        }
        out
    }
}

/// A batch fed to [`DenseNetwork::forward`]: dense rows, or one-hot rows
/// given by their hot index (never materialized).
#[derive(Debug, Clone)]
pub enum BatchInput<T> {
    Dense(Tensor2<T>),
    OneHot { indices: Vec<usize>, dim: usize },
}

impl<T: Real> BatchInput<T> {
    pub fn rows(&self) -> usize {
        match self {
            BatchInput::Dense(t) => t.rows(),
            BatchInput::OneHot { indices, .. } => indices.len(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            BatchInput::Dense(t) => t.cols(),
            BatchInput::OneHot { dim, .. } => *dim,
        }
    }
}

/// Cached intermediates from one forward pass, consumed by [`DenseNetwork::backward`].
pub struct ForwardPass<T> {
    input: BatchInput<T>,
    /// Post-activation output of each layer (before dropout).
    act: Vec<Tensor2<T>>,
    /// Scaled inverted-dropout mask per layer, when applied.
    masks: Vec<Option<Tensor2<T>>>,
}

impl<T: Real> ForwardPass<T> {
    /// Network output (the last layer never carries dropout).
    pub fn output(&self) -> &Tensor2<T> {
        self.act.last().expect("network has at least one layer")
    }

    /// Post-activation output of an intermediate layer.
    pub fn layer_output(&self, layer: usize) -> &Tensor2<T> {
        &self.act[layer]
    }

    fn batch_rows(&self) -> usize {
        self.input.rows()
    }

    /// Input that layer `l` consumed (applying the previous layer's mask).
    fn layer_input(&self, l: usize) -> std::borrow::Cow<'_, Tensor2<T>> {
        use std::borrow::Cow;
        if l == 0 {
            match &self.input {
                BatchInput::Dense(t) => Cow::Borrowed(t),
                BatchInput::OneHot { .. } => unreachable!("one-hot input handled separately"),
            }
        } else {
            match &self.masks[l - 1] {
                None => Cow::Borrowed(&self.act[l - 1]),
                Some(mask) => {
                    let mut t = self.act[l - 1].clone();
                    for (v, &m) in t.data_mut().iter_mut().zip(mask.data()) {
                        *v *= m;
                    }
                    Cow::Owned(t)
                }
            }
        }
    }
}

/// Per-parameter gradients, mirroring the network's layer shapes.
#[derive(Clone)]
pub struct Gradients<T> {
    pub weights: Vec<Tensor2<T>>,
    pub bias: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &DenseNetwork<T>) -> Self {
        Gradients {
            weights: net
                .layers
                .iter()
                .map(|l| Tensor2::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
            bias: net
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.bias.len()])
                .collect(),
        }
    }
}

/// Ordered stack of dense layers with per-layer dropout rates.
#[derive(Debug, Clone)]
pub struct DenseNetwork<T> {
    layers: Vec<DenseLayer<T>>,
    dropout: Vec<f32>,
    mode: Mode,
}

impl<T: Real> DenseNetwork<T> {
    /// `dropout[l]` is applied after layer `l`'s activation in train mode.
    /// Rates must lie in `[0, 1)` and the output layer's rate must be 0
    /// (the fused losses read the raw output).
    pub fn new(layers: Vec<DenseLayer<T>>, dropout: Vec<f32>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NnError::Unsupported(
                "network needs at least one layer".into(),
            ));
        }
        if dropout.len() != layers.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} dropout rates for {} layers",
                dropout.len(),
                layers.len()
            )));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(NnError::ShapeMismatch(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        for &r in &dropout {
            if !(0.0..1.0).contains(&r) {
                return Err(NnError::Unsupported(format!(
                    "dropout rate {r} outside [0, 1)"
                )));
            }
        }
        if dropout.last().copied().unwrap_or(0.0) > 0.0 {
            return Err(NnError::Unsupported(
                "dropout after the output layer is not supported".into(),
            ));
        }
        Ok(DenseNetwork {
            layers,
            dropout,
            mode: Mode::Train,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn dropout_rates(&self) -> &[f32] {
        &self.dropout
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols() + l.bias.len())
            .sum()
    }

    pub fn cast<U: Real>(&self) -> DenseNetwork<U> {
        DenseNetwork {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weights: l.weights.cast(),
                    bias: l.bias.iter().map(|&b| U::from_f64(b.as_f64())).collect(),
                    activation: l.activation,
                })
                .collect(),
            dropout: self.dropout.clone(),
            mode: self.mode,
        }
    }

    /// Forward pass honoring the network mode: in train mode each layer with
    /// a positive dropout rate gets a fresh inverted-dropout mask drawn from
    /// `rng`; in eval mode dropout is the identity.
    pub fn forward<R: Rng>(&self, input: BatchInput<T>, rng: &mut R) -> Result<ForwardPass<T>> {
        self.forward_impl(input, Some(rng), self.mode == Mode::Train)
    }

    /// Deterministic mask-free forward pass, regardless of mode.
    pub fn forward_eval(&self, input: BatchInput<T>) -> Result<ForwardPass<T>> {
        self.forward_impl::<rand_chacha::ChaCha8Rng>(input, None, false)
    }

    fn forward_impl<R: Rng>(
        &self,
        input: BatchInput<T>,
        mut rng: Option<&mut R>,
        dropout_active: bool,
    ) -> Result<ForwardPass<T>> {
        if input.cols() != self.input_dim() {
            return Err(NnError::ShapeMismatch(format!(
                "batch width {} vs network input {}",
                input.cols(),
                self.input_dim()
            )));
        }
        if let BatchInput::OneHot { indices, dim } = &input {
            if let Some(&bad) = indices.iter().find(|&&k| k >= *dim) {
                return Err(NnError::ShapeMismatch(format!(
                    "one-hot index {bad} outside dimension {dim}"
                )));
            }
        }
        let n = self.layers.len();
        let mut act: Vec<Tensor2<T>> = Vec::with_capacity(n);
        let mut masks: Vec<Option<Tensor2<T>>> = Vec::with_capacity(n);
        // Masked output of the previous layer when its mask is live.
        let mut dropped_prev: Option<Tensor2<T>> = None;

        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = if l == 0 {
                match &input {
                    BatchInput::Dense(x) => layer.affine(x),
                    BatchInput::OneHot { indices, .. } => layer.affine_one_hot(indices),
                }
            } else {
                let x = dropped_prev.as_ref().unwrap_or(&act[l - 1]);
                layer.affine(x)
            };
            layer.activation.apply(&mut z);

            let rate = self.dropout[l];
            dropped_prev = None;
            if dropout_active && rate > 0.0 {
                let rng = rng.as_deref_mut().ok_or(NnError::DropoutNeedsRng)?;
                let mask = dropout_mask::<T, R>(z.rows(), z.cols(), rate, rng);
                let mut dropped = z.clone();
                for (v, &m) in dropped.data_mut().iter_mut().zip(mask.data()) {
                    *v *= m;
                }
                masks.push(Some(mask));
                dropped_prev = Some(dropped);
            } else {
                masks.push(None);
            }
            act.push(z);
        }

        Ok(ForwardPass { input, act, masks })
    }

    /// Backpropagation. `logit_grad` is the loss gradient with respect to the
    /// *pre-activation* of the output layer (the fused convention used by
    /// [`loss::categorical_crossentropy`] and [`loss::binary_crossentropy`]).
    pub fn backward(&self, pass: &ForwardPass<T>, logit_grad: &Tensor2<T>) -> Result<Gradients<T>> {
        self.check_pass(pass, logit_grad)?;
        let n = self.layers.len();
        let batch = pass.batch_rows();
        let mut grads = Gradients::zeros_like(self);
        let mut g = logit_grad.clone();

        for l in (0..n).rev() {
            let layer = &self.layers[l];
            // Parameter gradients.
            {
                let dw = &mut grads.weights[l];
                let db = &mut grads.bias[l];
                if l == 0 {
                    if let BatchInput::OneHot { indices, .. } = &pass.input {
                        for (b, &k) in indices.iter().enumerate() {
                            let gr = g.row(b);
                            for (o, &gv) in gr.iter().enumerate() {
                                let cur = dw.get(o, k);
                                dw.set(o, k, cur + gv);
                            }
                        }
                    } else {
                        let x = pass.layer_input(0);
                        accumulate_weight_grad(&g, &x, dw);
                    }
                } else {
                    let x = pass.layer_input(l);
                    accumulate_weight_grad(&g, &x, dw);
                }
                for b in 0..batch {
                    for (o, &gv) in g.row(b).iter().enumerate() {
                        db[o] += gv;
                    }
                }
            }
            // Propagate to the previous layer.
            if l > 0 {
                let mut dx = Tensor2::zeros(batch, layer.input_dim());
                for b in 0..batch {
                    let gr = g.row(b);
                    let dr = dx.row_mut(b);
                    for (o, &gv) in gr.iter().enumerate() {
                        axpy(gv, layer.weights.row(o), dr);
                    }
                }
                if let Some(mask) = &pass.masks[l - 1] {
                    for (v, &m) in dx.data_mut().iter_mut().zip(mask.data()) {
                        *v *= m;
                    }
                }
                self.layers[l - 1]
                    .activation
                    .backprop_through(&mut dx, &pass.act[l - 1])?;
                g = dx;
            }
        }
        Ok(grads)
    }

    fn check_pass(&self, pass: &ForwardPass<T>, logit_grad: &Tensor2<T>) -> Result<()> {
        let n = self.layers.len();
        if pass.act.len() != n || pass.masks.len() != n {
            return Err(NnError::StaleCache);
        }
        if pass.input.cols() != self.input_dim() {
            return Err(NnError::StaleCache);
        }
        let batch = pass.batch_rows();
        for (l, layer) in self.layers.iter().enumerate() {
            if pass.act[l].rows() != batch || pass.act[l].cols() != layer.output_dim() {
                return Err(NnError::StaleCache);
            }
        }
        if logit_grad.rows() != batch || logit_grad.cols() != self.output_dim() {
            return Err(NnError::StaleCache);
        }
        Ok(())
    }
}

/// `dw[o, i] += sum_b g[b, o] * x[b, i]`.
fn accumulate_weight_grad<T: Real>(g: &Tensor2<T>, x: &Tensor2<T>, dw: &mut Tensor2<T>) {
    for b in 0..g.rows() {
        let gr = g.row(b);
        let xr = x.row(b);
        for (o, &gv) in gr.iter().enumerate() {
            if gv != T::zero() {
                axpy(gv, xr, dw.row_mut(o));
            }
        }
    }
}

/// Inverted-dropout mask: entries are `1/(1-rate)` with probability
/// `1-rate` and `0` otherwise.
fn dropout_mask<T: Real, R: Rng>(rows: usize, cols: usize, rate: f32, rng: &mut R) -> Tensor2<T> {
    let keep = 1.0 - rate as f64;
    let scale = T::from_f64(1.0 / keep);
    let mut t = Tensor2::zeros(rows, cols);
    for v in t.data_mut() {
        *v = if rng.gen::<f64>() < keep {
            scale
        } else {
            T::zero()
        };
    }
    t
}

#[cfg(test)]
mod tests;
