//! The grid of two-hidden-layer premise-relevance classifiers: construction,
//! training protocols, evaluation and the full grid sweep.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashes::derived_rng;
use crate::nn::{
    train, Activation, DenseLayer, DenseNetwork, EpochStats, LossKind, NnError, Optimizer,
    OptimizerKind, TrainInputs, TrainOptions, TrainTargets,
};
use crate::pairs::{split_counts, PairMatrix};

/// Hidden sizes allowed by the model grid.
pub const HIDDEN_SIZES: [usize; 5] = [64, 128, 256, 512, 1024];

/// Pair-vector width at the reference embedding dimension (2 x 256).
pub const PAIR_INPUT_DIM: usize = 512;

/// Adam learning rate used for every classifier.
pub const CLASSIFIER_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error(
        "invalid classifier spec {h1}x{h2}: sizes must come from {HIDDEN_SIZES:?} with h2 <= h1"
    )]
    InvalidSpec { h1: usize, h2: usize },
    #[error("cannot parse {0:?} as a classifier spec (expected e.g. \"512x128\")")]
    BadSpecString(String),
    #[error(transparent)]
    Net(#[from] NnError),
    #[error("failed to persist a grid cell: {0}")]
    Persist(#[source] std::io::Error),
}

/// One grid entry: first and second hidden layer widths plus the dropout
/// rate applied after each hidden activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub h1: usize,
    pub h2: usize,
    pub dropout: f32,
}

impl ClassifierSpec {
    /// Validated spec with the default dropout rate 0.5.
    pub fn new(h1: usize, h2: usize) -> Result<Self, ClassifierError> {
        if !HIDDEN_SIZES.contains(&h1) || !HIDDEN_SIZES.contains(&h2) || h2 > h1 {
            return Err(ClassifierError::InvalidSpec { h1, h2 });
        }
        Ok(ClassifierSpec {
            h1,
            h2,
            dropout: 0.5,
        })
    }

    pub fn with_dropout(mut self, dropout: f32) -> Self {
        self.dropout = dropout;
        self
    }

    /// All 15 valid (h1, h2) combinations, ordered by h1 then h2.
    pub fn grid() -> Vec<ClassifierSpec> {
        let mut specs = Vec::new();
        for &h1 in &HIDDEN_SIZES {
            for &h2 in &HIDDEN_SIZES {
                if h2 <= h1 {
                    specs.push(ClassifierSpec::new(h1, h2).unwrap());
                }
            }
        }
        specs
    }

    /// The four configurations retrained under the final protocol by default.
    pub fn default_final_picks() -> Vec<ClassifierSpec> {
        [(64, 64), (256, 256), (512, 128), (1024, 1024)]
            .into_iter()
            .map(|(h1, h2)| ClassifierSpec::new(h1, h2).unwrap())
            .collect()
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.h1, self.h2)
    }
}

impl FromStr for ClassifierSpec {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ClassifierError::BadSpecString(s.to_string());
        let (h1, h2) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let h1 = h1.trim().parse::<usize>().map_err(|_| bad())?;
        let h2 = h2.trim().parse::<usize>().map_err(|_| bad())?;
        ClassifierSpec::new(h1, h2)
    }
}

/// Trainable scalars of a spec at the reference 512-dimensional input.
pub fn param_count(spec: &ClassifierSpec) -> usize {
    param_count_for_input(PAIR_INPUT_DIM, spec)
}

/// `d*h1 + h1 + h1*h2 + h2 + h2 + 1` for input width `d`.
pub fn param_count_for_input(input_dim: usize, spec: &ClassifierSpec) -> usize {
    input_dim * spec.h1 + spec.h1 + spec.h1 * spec.h2 + spec.h2 + spec.h2 + 1
}

/// `[input -> h1 relu, dropout, h1 -> h2 relu, dropout, h2 -> 1 sigmoid]`
/// with He-uniform weights and zero biases.
pub fn build_network<R: Rng>(
    input_dim: usize,
    spec: &ClassifierSpec,
    rng: &mut R,
) -> DenseNetwork<f32> {
    let layers = vec![
        DenseLayer::he_uniform(input_dim, spec.h1, Activation::Relu, rng),
        DenseLayer::he_uniform(spec.h1, spec.h2, Activation::Relu, rng),
        DenseLayer::he_uniform(spec.h2, 1, Activation::Sigmoid, rng),
    ];
    DenseNetwork::new(layers, vec![spec.dropout, spec.dropout, 0.0])
        .expect("classifier stack is well-formed")
}

/// Validated constructor at the reference input width.
pub fn build_classifier<R: Rng>(
    spec: &ClassifierSpec,
    rng: &mut R,
) -> Result<DenseNetwork<f32>, ClassifierError> {
    ClassifierSpec::new(spec.h1, spec.h2)?;
    Ok(build_network(PAIR_INPUT_DIM, spec, rng))
}

/// Training protocol: `Dev` holds out 10% of the training rows for
/// validation; `Final` trains on everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Dev,
    Final,
}

impl Protocol {
    pub fn default_epochs(self) -> usize {
        match self {
            Protocol::Dev => 1500,
            Protocol::Final => 2500,
        }
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "dev" => Ok(Protocol::Dev),
            "final" => Ok(Protocol::Final),
            other => Err(format!("unknown protocol {other:?} (expected dev|final)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifierTrainOptions {
    pub protocol: Protocol,
    pub epochs: usize,
    pub batch_size: usize,
    pub deterministic: bool,
}

impl ClassifierTrainOptions {
    pub fn for_protocol(protocol: Protocol) -> Self {
        ClassifierTrainOptions {
            protocol,
            epochs: protocol.default_epochs(),
            batch_size: 4096,
            deterministic: false,
        }
    }
}

/// Build and train one classifier on standardized pair rows with Adam at the
/// fixed learning rate and logistic loss. No early stopping in either
/// protocol.
pub fn train_classifier<R: Rng>(
    spec: &ClassifierSpec,
    rows: &PairMatrix,
    opts: &ClassifierTrainOptions,
    rng: &mut R,
) -> Result<(DenseNetwork<f32>, Vec<EpochStats>), ClassifierError> {
    let mut net = build_network(rows.dim(), spec, rng);
    let mut opt = Optimizer::new(OptimizerKind::adam(CLASSIFIER_LEARNING_RATE), &net);
    let mut train_opts = TrainOptions::new(opts.epochs, opts.batch_size);
    train_opts.deterministic = opts.deterministic;

    let history = match opts.protocol {
        Protocol::Final => train(
            &mut net,
            TrainInputs::Dense(&rows.features),
            TrainTargets::Binary(&rows.labels),
            LossKind::BinaryCrossEntropy,
            &mut opt,
            &train_opts,
            rng,
            None,
        )?,
        Protocol::Dev => {
            use rand::seq::SliceRandom;
            let n = rows.len();
            let (fit_n, _) = split_counts(n, 0.1);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            let fit_ids = &order[..fit_n];
            let val_ids = &order[fit_n..];
            let fit_features = rows.features.gather_rows(fit_ids);
            let fit_labels: Vec<f32> = fit_ids.iter().map(|&i| rows.labels[i]).collect();
            let val_features = rows.features.gather_rows(val_ids);
            let val_labels: Vec<f32> = val_ids.iter().map(|&i| rows.labels[i]).collect();
            train(
                &mut net,
                TrainInputs::Dense(&fit_features),
                TrainTargets::Binary(&fit_labels),
                LossKind::BinaryCrossEntropy,
                &mut opt,
                &train_opts,
                rng,
                Some((
                    TrainInputs::Dense(&val_features),
                    TrainTargets::Binary(&val_labels),
                )),
            )?
        }
    };
    Ok((net, history))
}

/// Confusion counts and derived metrics on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub loss: f64,
    pub accuracy: f64,
    /// False negatives over actual positives, FN / (FN + TP).
    pub fn_rate_pos: f64,
    /// False negatives over all examples, FN / N.
    pub fn_rate_all: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Metrics from raw probability predictions: threshold 0.5 with ties
/// counting positive, logistic loss with the standard clamp.
pub fn report_from_predictions(predictions: &[f32], labels: &[f32]) -> EvalReport {
    assert_eq!(predictions.len(), labels.len());
    let n = predictions.len();
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    let mut loss = 0.0f64;
    for (&p, &y) in predictions.iter().zip(labels) {
        let positive = p >= 0.5;
        let actual = y >= 0.5;
        match (positive, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
        let clamped = (p as f64).clamp(
            crate::nn::loss::LOSS_CLAMP,
            1.0 - crate::nn::loss::LOSS_CLAMP,
        );
        loss -= if actual {
            clamped.ln()
        } else {
            (1.0 - clamped).ln()
        };
    }
    let actual_pos = tp + fn_;
    EvalReport {
        loss: loss / n as f64,
        accuracy: (tp + tn) as f64 / n as f64,
        fn_rate_pos: if actual_pos == 0 {
            0.0
        } else {
            fn_ as f64 / actual_pos as f64
        },
        fn_rate_all: fn_ as f64 / n as f64,
        tp,
        fp,
        tn,
        fn_,
    }
}

/// Eval-mode batched predictions of the positive-class probability.
pub fn predict(net: &DenseNetwork<f32>, rows: &PairMatrix) -> Result<Vec<f32>, ClassifierError> {
    let ids: Vec<usize> = (0..rows.len()).collect();
    let mut out = Vec::with_capacity(rows.len());
    for chunk in ids.chunks(4096) {
        let batch = rows.features.gather_rows(chunk);
        let pass = net.forward_eval(crate::nn::BatchInput::Dense(batch))?;
        out.extend((0..chunk.len()).map(|b| pass.output().get(b, 0)));
    }
    Ok(out)
}

pub fn evaluate(net: &DenseNetwork<f32>, test: &PairMatrix) -> Result<EvalReport, ClassifierError> {
    let predictions = predict(net, test)?;
    Ok(report_from_predictions(&predictions, &test.labels))
}

/// One completed grid cell (model and history go to the persistence
/// callback; the summary is returned).
#[derive(Debug, Clone)]
pub struct GridCell {
    pub spec: ClassifierSpec,
    pub params: usize,
    pub seed: u64,
    pub epochs: usize,
    pub report: EvalReport,
}

pub struct GridCellResult {
    pub cell: GridCell,
    pub model: DenseNetwork<f32>,
    pub history: Vec<EpochStats>,
}

/// Train and evaluate every spec, distributing cells over `jobs` workers.
/// Each cell derives its own generator from `(base_seed, "grid/h1xh2")`, so
/// results do not depend on scheduling. `on_cell` fires on the worker thread
/// as each cell completes (persist partial progress there; cells must write
/// to disjoint destinations). Cells come back sorted by (h1, h2).
pub fn run_grid<F>(
    specs: &[ClassifierSpec],
    train_rows: &PairMatrix,
    test_rows: &PairMatrix,
    opts: &ClassifierTrainOptions,
    base_seed: u64,
    jobs: usize,
    on_cell: F,
) -> Result<Vec<GridCell>, ClassifierError>
where
    F: Fn(&GridCellResult) -> std::io::Result<()> + Sync,
{
    let jobs = jobs.max(1).min(specs.len().max(1));
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<GridCell>> = Mutex::new(Vec::with_capacity(specs.len()));
    let failure: Mutex<Option<ClassifierError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= specs.len() || failure.lock().unwrap().is_some() {
                    break;
                }
                let spec = specs[i];
                let mut rng = derived_rng(base_seed, &format!("grid/{spec}"));
                let outcome = train_classifier(&spec, train_rows, opts, &mut rng).and_then(
                    |(model, history)| {
                        let report = evaluate(&model, test_rows)?;
                        let result = GridCellResult {
                            cell: GridCell {
                                spec,
                                params: param_count_for_input(train_rows.dim(), &spec),
                                seed: base_seed,
                                epochs: opts.epochs,
                                report,
                            },
                            model,
                            history,
                        };
                        on_cell(&result).map_err(ClassifierError::Persist)?;
                        Ok(result.cell)
                    },
                );
                match outcome {
                    Ok(cell) => done.lock().unwrap().push(cell),
                    Err(e) => {
                        let mut slot = failure.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut cells = done.into_inner().unwrap();
    cells.sort_by_key(|c| (c.spec.h1, c.spec.h2));
    Ok(cells)
}
