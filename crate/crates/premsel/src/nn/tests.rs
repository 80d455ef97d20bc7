use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::io::{model_from_bytes, model_to_bytes};
use super::loss::LOSS_CLAMP;
use super::optim::rmsprop_scheduled_lr;
use super::tensor::Tensor2;
use super::train::evaluate_set;
use super::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn identity_layer<T: Real>(dim: usize, activation: Activation) -> DenseLayer<T> {
    let mut w = Tensor2::zeros(dim, dim);
    for i in 0..dim {
        w.set(i, i, T::one());
    }
    DenseLayer::from_parts(w, vec![T::zero(); dim], activation)
}

fn random_net<T: Real>(dims: &[usize], acts: &[Activation], seed: u64) -> DenseNetwork<T> {
    let mut r = rng(seed);
    let layers = dims
        .windows(2)
        .zip(acts)
        .map(|(d, &a)| DenseLayer::he_uniform(d[0], d[1], a, &mut r))
        .collect::<Vec<_>>();
    let n = layers.len();
    DenseNetwork::new(layers, vec![0.0; n]).unwrap()
}

#[test]
fn he_uniform_bound_is_sqrt_6_over_fan_in() {
    let mut r = rng(1);
    // fan_in 6 -> bound exactly 1.0
    let t: Tensor2<f64> = he_uniform_init(4, 6, &mut r);
    assert!(t.data().iter().all(|v| v.abs() <= 1.0));

    // fan_in 512 -> bound ~0.108253
    let bound = (6.0f64 / 512.0).sqrt();
    assert!((bound - 0.108253).abs() < 1e-6);
    let t: Tensor2<f64> = he_uniform_init(64, 512, &mut r);
    assert!(t.data().iter().all(|v| v.abs() <= bound));

    // sample mean tends to zero
    let mean: f64 = t.data().iter().sum::<f64>() / t.data().len() as f64;
    assert!(mean.abs() < bound * 0.02);
}

#[test]
fn softmax_of_zero_rows_is_uniform() {
    let mut t = Tensor2::from_rows(&[vec![0.0f64; 3]]);
    Activation::Softmax.apply(&mut t);
    for &v in t.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn pointwise_activations_match_analytic_values() {
    let mut t = Tensor2::from_rows(&[vec![0.0f64]]);
    Activation::Sigmoid.apply(&mut t);
    assert_eq!(t.get(0, 0), 0.5);

    let mut t = Tensor2::from_rows(&[vec![0.0f64]]);
    Activation::Tanh.apply(&mut t);
    assert_eq!(t.get(0, 0), 0.0);

    let mut t = Tensor2::from_rows(&[vec![-1.0f64, 2.0]]);
    Activation::Relu.apply(&mut t);
    assert_eq!(t.row(0), &[0.0, 2.0]);
}

#[test]
fn identity_network_reproduces_input() {
    let net = DenseNetwork::new(
        vec![identity_layer::<f64>(3, Activation::Identity)],
        vec![0.0],
    )
    .unwrap();
    let x = Tensor2::from_rows(&[vec![0.5, -1.25, 3.0], vec![0.0, 0.0, 0.0]]);
    let pass = net.forward_eval(BatchInput::Dense(x.clone())).unwrap();
    assert_eq!(pass.output().data(), x.data());
}

#[test]
fn one_hot_forward_selects_weight_columns() {
    let net = random_net::<f64>(&[5, 3], &[Activation::Identity], 7);
    let pass = net
        .forward_eval(BatchInput::OneHot {
            indices: vec![2, 4],
            dim: 5,
        })
        .unwrap();
    for (b, &k) in [2usize, 4].iter().enumerate() {
        for o in 0..3 {
            assert_eq!(pass.output().get(b, o), net.layers()[0].weights.get(o, k));
        }
    }
}

#[test]
fn forward_rejects_width_mismatch() {
    let net = random_net::<f64>(&[4, 2], &[Activation::Tanh], 3);
    let x = Tensor2::zeros(1, 3);
    assert!(matches!(
        net.forward_eval(BatchInput::Dense(x)),
        Err(NnError::ShapeMismatch(_))
    ));
}

#[test]
fn categorical_crossentropy_known_values() {
    // uniform vs uniform over 4 classes -> ln 4
    let pred = Tensor2::from_rows(&[vec![0.25f64; 4]]);
    let (loss, _) = categorical_crossentropy(&pred, &pred).unwrap();
    assert!((loss - 4.0f64.ln()).abs() < 1e-9);
    assert!((loss - 1.386294).abs() < 1e-6);

    // one-hot prediction equal to target -> ~0 after clamping
    let hot = Tensor2::from_rows(&[vec![1.0f64, 0.0, 0.0]]);
    let (loss, _) = categorical_crossentropy(&hot, &hot).unwrap();
    assert!(loss <= 1e-6);

    // direct evaluation
    let p = Tensor2::from_rows(&[vec![0.75f64, 0.25]]);
    let (loss, _) = categorical_crossentropy(&p, &p).unwrap();
    assert!((loss - 0.562335).abs() < 1e-6);
}

#[test]
fn categorical_crossentropy_gradient_is_fused() {
    let pred = Tensor2::from_rows(&[vec![0.7f64, 0.3], vec![0.2, 0.8]]);
    let target = Tensor2::from_rows(&[vec![1.0f64, 0.0], vec![0.0, 1.0]]);
    let (_, grad) = categorical_crossentropy(&pred, &target).unwrap();
    assert!((grad.get(0, 0) - (0.7 - 1.0) / 2.0).abs() < 1e-12);
    assert!((grad.get(1, 1) - (0.8 - 1.0) / 2.0).abs() < 1e-12);
}

#[test]
fn binary_crossentropy_known_values() {
    let pred = Tensor2::from_rows(&[vec![0.5f64]]);
    let (loss, _) = binary_crossentropy(&pred, &[1.0]).unwrap();
    assert!((loss - 2.0f64.ln()).abs() < 1e-9);

    let pred = Tensor2::from_rows(&[vec![1.0f64]]);
    let (loss, _) = binary_crossentropy(&pred, &[1.0]).unwrap();
    assert!(loss <= 1e-6);

    let pred = Tensor2::from_rows(&[vec![0.9f64]]);
    let (loss, _) = binary_crossentropy(&pred, &[0.0]).unwrap();
    assert!((loss - 2.302585).abs() < 1e-5);
}

#[test]
fn loss_shape_mismatch_is_reported() {
    let pred = Tensor2::<f64>::zeros(2, 3);
    let target = Tensor2::<f64>::zeros(2, 4);
    assert!(matches!(
        categorical_crossentropy(&pred, &target),
        Err(NnError::ShapeMismatch(_))
    ));
    assert!(matches!(
        binary_crossentropy(&pred, &[0.0, 1.0]),
        Err(NnError::ShapeMismatch(_))
    ));
}

#[test]
fn backward_of_zero_gradient_is_zero() {
    let net = random_net::<f64>(&[4, 6, 2], &[Activation::Tanh, Activation::Softmax], 11);
    let x = Tensor2::from_rows(&[vec![0.1, -0.2, 0.3, 0.4]]);
    let pass = net.forward_eval(BatchInput::Dense(x)).unwrap();
    let zero = Tensor2::zeros(1, 2);
    let grads = net.backward(&pass, &zero).unwrap();
    for w in &grads.weights {
        assert!(w.data().iter().all(|&v| v == 0.0));
    }
    for b in &grads.bias {
        assert!(b.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn single_sigmoid_layer_fused_bce_weight_gradient() {
    // dW = (p - y)^T . x / batch for one linear+sigmoid layer under fused BCE.
    let net = random_net::<f64>(&[3, 1], &[Activation::Sigmoid], 5);
    let x = Tensor2::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.25, -0.75]]);
    let y = [1.0, 0.0];
    let pass = net.forward_eval(BatchInput::Dense(x.clone())).unwrap();
    let (_, lgrad) = binary_crossentropy(pass.output(), &y).unwrap();
    let grads = net.backward(&pass, &lgrad).unwrap();
    for i in 0..3 {
        let expected: f64 = (0..2)
            .map(|b| (pass.output().get(b, 0) - y[b]) * x.get(b, i))
            .sum::<f64>()
            / 2.0;
        assert!((grads.weights[0].get(0, i) - expected).abs() < 1e-12);
    }
}

#[test]
fn backward_with_mismatched_cache_is_stale() {
    let net_a = random_net::<f64>(&[4, 2], &[Activation::Softmax], 1);
    let net_b = random_net::<f64>(&[4, 3, 2], &[Activation::Tanh, Activation::Softmax], 2);
    let x = Tensor2::zeros(2, 4);
    let pass = net_a.forward_eval(BatchInput::Dense(x)).unwrap();
    let g = Tensor2::zeros(2, 2);
    assert!(matches!(
        net_b.backward(&pass, &g),
        Err(NnError::StaleCache)
    ));

    let wrong_grad = Tensor2::zeros(3, 2);
    assert!(matches!(
        net_a.backward(&pass, &wrong_grad),
        Err(NnError::StaleCache)
    ));
}

#[test]
fn rmsprop_zero_gradient_leaves_parameters_unchanged() {
    let mut net = random_net::<f64>(&[3, 2], &[Activation::Identity], 9);
    let before = net.layers()[0].weights.clone();
    let mut opt = Optimizer::new(OptimizerKind::rmsprop_default(), &net);
    let grads = Gradients::zeros_like(&net);
    opt.step(&mut net, &grads).unwrap();
    assert_eq!(net.layers()[0].weights.data(), before.data());
}

#[test]
fn rmsprop_first_step_matches_analytic_value() {
    // Fresh accumulator, g = 1: step = lr / (sqrt(0.1) + eps) ~ 3.1623e-3.
    let layer = DenseLayer::from_parts(
        Tensor2::from_rows(&[vec![0.0f64]]),
        vec![0.0],
        Activation::Identity,
    );
    let mut net = DenseNetwork::new(vec![layer], vec![0.0]).unwrap();
    let mut opt = Optimizer::new(OptimizerKind::rmsprop_default(), &net);
    let mut grads = Gradients::zeros_like(&net);
    grads.weights[0].set(0, 0, 1.0);
    opt.step(&mut net, &grads).unwrap();
    let delta = net.layers()[0].weights.get(0, 0);
    assert!((delta + 3.1623e-3).abs() < 1e-6, "delta = {delta}");
}

#[test]
fn rmsprop_schedule_halves_at_inverse_decay() {
    assert_eq!(rmsprop_scheduled_lr(1e-3, 1e-8, 100_000_000), 0.5e-3);
    assert_eq!(rmsprop_scheduled_lr(1e-3, 1e-8, 0), 1e-3);
}

#[test]
fn adam_zero_gradient_leaves_parameters_unchanged() {
    let mut net = random_net::<f64>(&[3, 2], &[Activation::Identity], 13);
    let before = net.layers()[0].weights.clone();
    let mut opt = Optimizer::new(OptimizerKind::adam(1e-4), &net);
    let grads = Gradients::zeros_like(&net);
    opt.step(&mut net, &grads).unwrap();
    assert_eq!(net.layers()[0].weights.data(), before.data());
}

#[test]
fn adam_first_step_magnitude_is_close_to_lr() {
    let lr = 1e-4;
    for g in [1.0, -0.5, 10.0, 1e-3] {
        let layer = DenseLayer::from_parts(
            Tensor2::from_rows(&[vec![0.0f64]]),
            vec![0.0],
            Activation::Identity,
        );
        let mut net = DenseNetwork::new(vec![layer], vec![0.0]).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::adam(lr), &net);
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0].set(0, 0, g);
        opt.step(&mut net, &grads).unwrap();
        let delta = net.layers()[0].weights.get(0, 0);
        assert!(delta.signum() == -g.signum());
        assert!(
            delta.abs() >= 0.99 * lr && delta.abs() <= lr,
            "delta = {delta}"
        );
    }
}

#[test]
fn adam_second_identical_step_does_not_blow_up() {
    let layer = DenseLayer::from_parts(
        Tensor2::from_rows(&[vec![0.0f64]]),
        vec![0.0],
        Activation::Identity,
    );
    let mut net = DenseNetwork::new(vec![layer], vec![0.0]).unwrap();
    let mut opt = Optimizer::new(OptimizerKind::adam(1e-4), &net);
    let mut grads = Gradients::zeros_like(&net);
    grads.weights[0].set(0, 0, 1.0);
    opt.step(&mut net, &grads).unwrap();
    let first = net.layers()[0].weights.get(0, 0).abs();
    opt.step(&mut net, &grads).unwrap();
    let second = net.layers()[0].weights.get(0, 0).abs() - first;
    assert!(second <= first * 1.01);
}

#[test]
fn train_zero_epochs_returns_empty_history() {
    let mut net = random_net::<f32>(&[4, 1], &[Activation::Sigmoid], 17);
    let before = net.layers()[0].weights.clone();
    let features = Tensor2::from_rows(&[vec![0.0f32; 4], vec![1.0; 4]]);
    let labels = [0.0f32, 1.0];
    let mut opt = Optimizer::new(OptimizerKind::adam(1e-3), &net);
    let history = train(
        &mut net,
        TrainInputs::Dense(&features),
        TrainTargets::Binary(&labels),
        LossKind::BinaryCrossEntropy,
        &mut opt,
        &TrainOptions::new(0, 2),
        &mut rng(0),
        None,
    )
    .unwrap();
    assert!(history.is_empty());
    assert_eq!(net.layers()[0].weights.data(), before.data());
}

fn blob_dataset(n_per_class: usize, dim: usize, seed: u64) -> (Tensor2<f32>, Vec<f32>) {
    use rand::Rng;
    let mut r = rng(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2 {
        let center = if class == 0 { -1.0 } else { 1.0 };
        for _ in 0..n_per_class {
            let row: Vec<f32> = (0..dim)
                .map(|_| (center + r.gen_range(-0.5..0.5)) as f32)
                .collect();
            rows.push(row);
            labels.push(class as f32);
        }
    }
    (Tensor2::from_rows(&rows), labels)
}

#[test]
fn train_learns_separable_blobs() {
    let (features, labels) = blob_dataset(100, 8, 42);
    let mut r = rng(7);
    let layers = vec![
        DenseLayer::he_uniform(8, 64, Activation::Relu, &mut r),
        DenseLayer::he_uniform(64, 64, Activation::Relu, &mut r),
        DenseLayer::he_uniform(64, 1, Activation::Sigmoid, &mut r),
    ];
    let mut net = DenseNetwork::new(layers, vec![0.0, 0.0, 0.0]).unwrap();
    let mut opt = Optimizer::new(OptimizerKind::adam(1e-3), &net);
    let history = train(
        &mut net,
        TrainInputs::Dense(&features),
        TrainTargets::Binary(&labels),
        LossKind::BinaryCrossEntropy,
        &mut opt,
        &TrainOptions::new(200, 32),
        &mut rng(3),
        None,
    )
    .unwrap();
    let final_acc = history.last().unwrap().accuracy;
    assert!(final_acc >= 0.95, "train accuracy {final_acc}");
}

#[test]
fn train_with_equal_seeds_is_bitwise_reproducible() {
    let (features, labels) = blob_dataset(20, 4, 8);
    let build = || {
        let mut r = rng(21);
        let layers = vec![
            DenseLayer::he_uniform(4, 8, Activation::Relu, &mut r),
            DenseLayer::he_uniform(8, 1, Activation::Sigmoid, &mut r),
        ];
        DenseNetwork::new(layers, vec![0.3, 0.0]).unwrap()
    };
    let mut opts = TrainOptions::new(5, 8);
    opts.deterministic = true;
    let run = || {
        let mut net = build();
        let mut opt = Optimizer::new(OptimizerKind::adam(1e-3), &net);
        let history = train(
            &mut net,
            TrainInputs::Dense(&features),
            TrainTargets::Binary(&labels),
            LossKind::BinaryCrossEntropy,
            &mut opt,
            &opts,
            &mut rng(99),
            None,
        )
        .unwrap();
        (history, net.layers()[0].weights.clone())
    };
    let (h1, w1) = run();
    let (h2, w2) = run();
    assert_eq!(h1, h2);
    assert_eq!(w1.data(), w2.data());
}

#[test]
fn train_records_validation_metrics() {
    let (features, labels) = blob_dataset(20, 4, 31);
    let mut net = random_net::<f32>(&[4, 6, 1], &[Activation::Relu, Activation::Sigmoid], 2);
    let mut opt = Optimizer::new(OptimizerKind::adam(1e-3), &net);
    let history = train(
        &mut net,
        TrainInputs::Dense(&features),
        TrainTargets::Binary(&labels),
        LossKind::BinaryCrossEntropy,
        &mut opt,
        &TrainOptions::new(2, 16),
        &mut rng(4),
        Some((TrainInputs::Dense(&features), TrainTargets::Binary(&labels))),
    )
    .unwrap();
    assert!(history
        .iter()
        .all(|e| e.val_loss.is_some() && e.val_accuracy.is_some()));
}

#[test]
fn train_rejects_mismatched_loss_pairing() {
    let mut net = random_net::<f32>(&[4, 2], &[Activation::Softmax], 2);
    let features = Tensor2::<f32>::zeros(2, 4);
    let labels = [0.0f32, 1.0];
    let mut opt = Optimizer::new(OptimizerKind::adam(1e-3), &net);
    let err = train(
        &mut net,
        TrainInputs::Dense(&features),
        TrainTargets::Binary(&labels),
        LossKind::BinaryCrossEntropy,
        &mut opt,
        &TrainOptions::new(1, 2),
        &mut rng(0),
        None,
    )
    .unwrap_err();
    assert!(matches!(err, NnError::Unsupported(_)));
}

#[test]
fn accuracy_threshold_and_tie_rules() {
    // Perfect predictions.
    let pred = Tensor2::from_rows(&[vec![0.9f64], vec![0.1]]);
    let target = Tensor2::from_rows(&[vec![1.0f64], vec![0.0]]);
    assert_eq!(accuracy(&pred, &target, TaskKind::Binary).unwrap(), 1.0);

    // p = 0.5 with y = 1 counts correct under the ">=" rule.
    let pred = Tensor2::from_rows(&[vec![0.5f64]]);
    let target = Tensor2::from_rows(&[vec![1.0f64]]);
    assert_eq!(accuracy(&pred, &target, TaskKind::Binary).unwrap(), 1.0);

    // Uniform rows: argmax ties resolve to index 0.
    let pred = Tensor2::from_rows(&[vec![0.25f64; 4], vec![0.25; 4]]);
    let target = Tensor2::from_rows(&[vec![1.0f64, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]]);
    assert_eq!(
        accuracy(&pred, &target, TaskKind::Categorical).unwrap(),
        0.5
    );
}

#[test]
fn evaluate_set_matches_direct_loss() {
    let net = random_net::<f64>(&[3, 1], &[Activation::Sigmoid], 23);
    let features = Tensor2::from_rows(&[vec![0.5, -0.5, 1.0], vec![0.1, 0.2, 0.3]]);
    let labels = [1.0, 0.0];
    let pass = net
        .forward_eval(BatchInput::Dense(features.clone()))
        .unwrap();
    let (direct, _) = binary_crossentropy(pass.output(), &labels).unwrap();
    let (loss, _) = evaluate_set(
        &net,
        TrainInputs::Dense(&features),
        TrainTargets::Binary(&labels),
        LossKind::BinaryCrossEntropy,
        1,
    )
    .unwrap();
    assert!((loss - direct).abs() < 1e-12);
}

#[test]
fn model_roundtrip_preserves_forward_bitwise() {
    let mut r = rng(77);
    let layers = vec![
        DenseLayer::he_uniform(6, 5, Activation::Relu, &mut r),
        DenseLayer::he_uniform(5, 3, Activation::Softmax, &mut r),
    ];
    let net = DenseNetwork::new(layers, vec![0.5, 0.0]).unwrap();
    let restored = model_from_bytes(&model_to_bytes(&net)).unwrap();
    let x: Tensor2<f32> = he_uniform_init(4, 6, &mut r);
    let a = net.forward_eval(BatchInput::Dense(x.clone())).unwrap();
    let b = restored.forward_eval(BatchInput::Dense(x)).unwrap();
    assert_eq!(a.output().data(), b.output().data());
    assert_eq!(restored.dropout_rates(), net.dropout_rates());
}

#[test]
fn model_file_corruption_is_rejected() {
    let net = random_net::<f32>(&[4, 2], &[Activation::Softmax], 5);
    let bytes = model_to_bytes(&net);

    // Truncation at any point fails with a typed error.
    for cut in [bytes.len() - 1, bytes.len() / 2, 6, 3] {
        let err = model_from_bytes(&bytes[..cut]).unwrap_err();
        assert!(
            matches!(err, NnError::ChecksumMismatch | NnError::BadMagic),
            "cut {cut}: {err:?}"
        );
    }

    // Wrong magic.
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(model_from_bytes(&bad), Err(NnError::BadMagic)));

    // Unsupported version (with a fixed-up checksum).
    let mut bad = bytes.clone();
    bad[4] = 99;
    let len = bad.len();
    let crc = crc32fast::hash(&bad[..len - 4]);
    bad[len - 4..].copy_from_slice(&crc.to_le_bytes());
    assert!(matches!(
        model_from_bytes(&bad),
        Err(NnError::VersionMismatch(99))
    ));

    // Any single flipped byte in the payload trips the checksum.
    for pos in [5, 9, 14, bytes.len() - 6] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x40;
        assert!(model_from_bytes(&bad).is_err(), "flip at {pos} accepted");
    }
}

#[test]
fn gradient_check_random_tanh_softmax_net() {
    for seed in 0..5 {
        let mut net = random_net::<f64>(&[4, 5, 3], &[Activation::Tanh, Activation::Softmax], seed);
        let mut r = rng(seed + 100);
        let x: Tensor2<f64> = he_uniform_init(4, 4, &mut r);
        let target = random_distribution_rows(4, 3, seed + 200);
        let err = gradient_check(
            &mut net,
            LossKind::CategoricalCrossEntropy,
            &x,
            TrainTargets::Rows(&target),
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: max rel err {err}");
    }
}

#[test]
fn gradient_check_identity_softmax_is_tight() {
    let mut net = DenseNetwork::new(
        vec![identity_layer::<f64>(4, Activation::Softmax)],
        vec![0.0],
    )
    .unwrap();
    let x = Tensor2::from_rows(&[vec![0.3, -0.2, 0.5, 0.1], vec![1.0, 0.0, -1.0, 0.5]]);
    let target = random_distribution_rows(2, 4, 9);
    let err = gradient_check(
        &mut net,
        LossKind::CategoricalCrossEntropy,
        &x,
        TrainTargets::Rows(&target),
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-6, "max rel err {err}");
}

#[test]
fn gradient_check_relu_net_away_from_kinks() {
    // Hand-set weights and inputs keep every pre-activation at least 1e-2
    // from zero, where the ReLU finite difference is exact.
    let w1 = Tensor2::from_rows(&[vec![0.5f64, -0.25, 0.75], vec![-0.5, 1.0, 0.25]]);
    let w2 = Tensor2::from_rows(&[vec![0.8f64, -0.6]]);
    let layers = vec![
        DenseLayer::from_parts(w1, vec![0.05, -0.05], Activation::Relu),
        DenseLayer::from_parts(w2, vec![0.1], Activation::Sigmoid),
    ];
    let mut net = DenseNetwork::new(layers, vec![0.0, 0.0]).unwrap();
    let x = Tensor2::from_rows(&[vec![1.0, 0.5, -0.5], vec![-1.0, 1.5, 1.0]]);
    let err = gradient_check(
        &mut net,
        LossKind::BinaryCrossEntropy,
        &x,
        TrainTargets::Binary(&[1.0, 0.0]),
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-4, "max rel err {err}");
}

fn random_distribution_rows(rows: usize, cols: usize, seed: u64) -> Tensor2<f64> {
    use rand::Rng;
    let mut r = rng(seed);
    let mut t = Tensor2::zeros(rows, cols);
    for b in 0..rows {
        let mut sum = 0.0;
        for c in 0..cols {
            let v: f64 = r.gen_range(0.05..1.0);
            t.set(b, c, v);
            sum += v;
        }
        for c in 0..cols {
            t.set(b, c, t.get(b, c) / sum);
        }
    }
    t
}

#[test]
fn inverted_dropout_preserves_expectation() {
    // identity -> dropout 0.5 -> identity; output = input * mask.
    let layers = vec![
        identity_layer::<f64>(4, Activation::Identity),
        identity_layer::<f64>(4, Activation::Identity),
    ];
    let net = DenseNetwork::new(layers, vec![0.5, 0.0]).unwrap();
    let base = [1.0f64, 2.0, -1.5, 0.5];
    let draws = 10_000;
    let x = Tensor2::from_rows(&vec![base.to_vec(); draws]);
    let mut r = rng(12345);
    let pass = net.forward(BatchInput::Dense(x), &mut r).unwrap();
    let out = pass.output();
    let mut mean_abs_err = 0.0;
    let mut mean_abs = 0.0;
    for (c, &b) in base.iter().enumerate() {
        let mean: f64 = (0..draws).map(|row| out.get(row, c)).sum::<f64>() / draws as f64;
        mean_abs_err += (mean - b).abs();
        mean_abs += b.abs();
    }
    assert!(
        mean_abs_err / mean_abs < 0.02,
        "relative deviation {}",
        mean_abs_err / mean_abs
    );
}

#[test]
fn eval_mode_forward_is_deterministic_and_mask_free() {
    let mut net = random_net::<f64>(&[4, 8, 1], &[Activation::Relu, Activation::Sigmoid], 3);
    net.set_mode(Mode::Eval);
    let x = Tensor2::from_rows(&[vec![0.1, 0.2, 0.3, 0.4]]);
    let mut r1 = rng(1);
    let mut r2 = rng(2);
    let a = net.forward(BatchInput::Dense(x.clone()), &mut r1).unwrap();
    let b = net.forward(BatchInput::Dense(x), &mut r2).unwrap();
    assert_eq!(a.output().data(), b.output().data());
}

#[test]
fn network_construction_rejects_bad_configs() {
    let l1 = identity_layer::<f64>(3, Activation::Tanh);
    let l2 = identity_layer::<f64>(4, Activation::Softmax);
    assert!(matches!(
        DenseNetwork::new(vec![l1.clone(), l2], vec![0.0, 0.0]),
        Err(NnError::ShapeMismatch(_))
    ));
    assert!(matches!(
        DenseNetwork::new(vec![l1.clone()], vec![0.5]),
        Err(NnError::Unsupported(_))
    ));
    assert!(matches!(
        DenseNetwork::new(vec![l1], vec![1.0]),
        Err(NnError::Unsupported(_))
    ));
}

#[test]
fn loss_clamp_matches_documented_value() {
    assert_eq!(LOSS_CLAMP, 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..5, cols in 1usize..6, seed in 0u64..1000) {
        use rand::Rng;
        let mut r = rng(seed);
        let mut t = Tensor2::<f32>::zeros(rows, cols);
        for v in t.data_mut() {
            *v = r.gen_range(-30.0..30.0f64) as f32;
        }
        Activation::Softmax.apply(&mut t);
        for b in 0..rows {
            let sum: f32 = t.row(b).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-5);
            prop_assert!(t.row(b).iter().all(|&v| v > 0.0 && v < 1.0 + 1e-6));
        }
    }

    #[test]
    fn model_roundtrip_is_lossless(seed in 0u64..500, hidden in 1usize..6, inputs in 1usize..5) {
        let net = random_net::<f32>(
            &[inputs, hidden, 2],
            &[Activation::Tanh, Activation::Softmax],
            seed,
        );
        let restored = model_from_bytes(&model_to_bytes(&net)).unwrap();
        let mut r = rng(seed ^ 0xabcdef);
        let x: Tensor2<f32> = he_uniform_init(3, inputs, &mut r);
        let a = net.forward_eval(BatchInput::Dense(x.clone())).unwrap();
        let b = restored.forward_eval(BatchInput::Dense(x)).unwrap();
        prop_assert_eq!(a.output().data(), b.output().data());
    }
}
