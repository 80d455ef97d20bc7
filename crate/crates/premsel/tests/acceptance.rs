//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured values (run with `--nocapture` to see them).
//!
//! Criteria 6 and 7 need the full corpus on disk; point `PREMSEL_DATASET` at
//! it to enable them (criterion 7 additionally hides behind `--ignored`
//! because it trains for hours).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use premsel::classifier::{self, ClassifierSpec};
use premsel::embedding::{embed_preactivation, embed_signature, ContextModel};
use premsel::nn::{
    gradient_check, Activation, BatchInput, DenseLayer, DenseNetwork, LossKind, Optimizer,
    OptimizerKind, Tensor2, TrainInputs, TrainOptions, TrainTargets,
};
use premsel::pairs::split_counts;
use premsel::pipeline::{Overrides, Pipeline, PipelineConfig};
use premsel::signatures::{context_distribution, context_matrix, SparseSignature};
use premsel::tptp::{corpus_statistics, extract_functors, parse_dataset_stream};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Criterion 1: the parameter-count formula reproduces the published table
/// for 14 of 15 cells exactly; the (256,128) cell computes to 164,353 with
/// the published 164,535 recorded as a known discrepancy.
#[test]
fn criterion_1_parameter_count_table() {
    let formula_expected: [(usize, usize, usize); 15] = [
        (64, 64, 37_057),
        (128, 64, 73_985),
        (128, 128, 82_305),
        (256, 64, 147_841),
        (256, 128, 164_353),
        (256, 256, 197_377),
        (512, 64, 295_553),
        (512, 128, 328_449),
        (512, 256, 394_241),
        (512, 512, 525_825),
        (1024, 64, 590_977),
        (1024, 128, 656_641),
        (1024, 256, 787_969),
        (1024, 512, 1_050_625),
        (1024, 1024, 1_575_937),
    ];
    // As printed in the reference table (one transposed-digit cell).
    let published: BTreeMap<(usize, usize), usize> = formula_expected
        .iter()
        .map(|&(h1, h2, p)| ((h1, h2), if (h1, h2) == (256, 128) { 164_535 } else { p }))
        .collect();

    let mut exact_matches = 0;
    for (h1, h2, expected) in formula_expected {
        let spec = ClassifierSpec::new(h1, h2).unwrap();
        let computed = classifier::param_count(&spec);
        assert_eq!(computed, expected, "formula value for {h1}x{h2}");
        if published[&(h1, h2)] == computed {
            exact_matches += 1;
        }
    }
    assert_eq!(
        exact_matches, 14,
        "14 of 15 cells match the published table"
    );
    assert_eq!(published[&(256, 128)], 164_535);
    println!(
        "criterion 1 PASS: 14/15 published cells match; 256x128 computed 164353 vs published 164535 (known discrepancy)"
    );
}

fn random_distribution_rows(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Tensor2<f64> {
    let mut t = Tensor2::zeros(rows, cols);
    for b in 0..rows {
        let mut sum = 0.0;
        let row = t.row_mut(b);
        for v in row.iter_mut() {
            *v = r.gen_range(0.05..1.0);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    t
}

/// Pre-activations of layer `layer` for a dense batch, computed directly
/// from the weights (used to reject ReLU-kink cases).
fn layer_preactivations(net: &DenseNetwork<f64>, batch: &Tensor2<f64>, layer: usize) -> Vec<f64> {
    let mut current = batch.clone();
    for (l, dense) in net.layers().iter().enumerate() {
        let mut z = Tensor2::zeros(current.rows(), dense.output_dim());
        for b in 0..current.rows() {
            for o in 0..dense.output_dim() {
                let mut acc = dense.bias[o];
                for i in 0..dense.input_dim() {
                    acc += current.get(b, i) * dense.weights.get(o, i);
                }
                z.set(b, o, acc);
            }
        }
        if l == layer {
            return z.data().to_vec();
        }
        // Propagate through the activation; ReLU is the only one ahead of
        // the layers this helper inspects.
        assert_eq!(dense.activation, Activation::Relu);
        for v in z.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        current = z;
    }
    unreachable!("layer index within network");
}

/// Criterion 2: gradient checking stays under 1e-4 max relative error for
/// the reduced context architecture and the reduced classifier architecture
/// across at least 20 random seeds each.
#[test]
fn criterion_2_gradient_correctness() {
    let h = 1e-4;
    let mut worst: f64 = 0.0;

    // Context architecture: 32 -> 8 tanh -> 32 softmax under categorical CE.
    for seed in 0..20u64 {
        let mut r = rng(1000 + seed);
        let layers = vec![
            DenseLayer::he_uniform(32, 8, Activation::Tanh, &mut r),
            DenseLayer::he_uniform(8, 32, Activation::Softmax, &mut r),
        ];
        let mut net = DenseNetwork::new(layers, vec![0.0, 0.0]).unwrap();
        let mut batch = Tensor2::zeros(4, 32);
        for v in batch.data_mut() {
            *v = r.gen_range(-1.0..1.0);
        }
        let targets = random_distribution_rows(4, 32, &mut r);
        let err = gradient_check(
            &mut net,
            LossKind::CategoricalCrossEntropy,
            &batch,
            TrainTargets::Rows(&targets),
            h,
        )
        .unwrap();
        assert!(err < 1e-4, "context arch seed {seed}: {err}");
        worst = worst.max(err);
    }

    // Classifier architecture: 16 -> 8 relu -> 8 relu -> 1 sigmoid, dropout
    // off, logistic loss. Batches whose ReLU pre-activations sit within 1e-2
    // of the kink are rejected (central differences are not meaningful
    // across the kink) and replaced from later seeds.
    let mut accepted = 0;
    let mut candidate = 0u64;
    while accepted < 20 {
        candidate += 1;
        assert!(candidate < 500, "could not find 20 kink-free cases");
        let mut r = rng(2000 + candidate);
        let layers = vec![
            DenseLayer::he_uniform(16, 8, Activation::Relu, &mut r),
            DenseLayer::he_uniform(8, 8, Activation::Relu, &mut r),
            DenseLayer::he_uniform(8, 1, Activation::Sigmoid, &mut r),
        ];
        let mut net = DenseNetwork::new(layers, vec![0.0, 0.0, 0.0]).unwrap();
        let mut batch = Tensor2::zeros(4, 16);
        for v in batch.data_mut() {
            *v = r.gen_range(-1.0..1.0);
        }
        let near_kink = [0, 1].iter().any(|&l| {
            layer_preactivations(&net, &batch, l)
                .iter()
                .any(|p| p.abs() < 1e-2)
        });
        if near_kink {
            continue;
        }
        let labels: Vec<f64> = (0..4).map(|_| f64::from(r.gen_range(0..2))).collect();
        let err = gradient_check(
            &mut net,
            LossKind::BinaryCrossEntropy,
            &batch,
            TrainTargets::Binary(&labels),
            h,
        )
        .unwrap();
        assert!(err < 1e-4, "classifier arch candidate {candidate}: {err}");
        worst = worst.max(err);
        accepted += 1;
    }
    println!("criterion 2 PASS: 40 gradient checks under 1e-4 (worst {worst:.3e})");
}

/// Criterion 3: the one-pass context matrix equals a brute-force per-index
/// reimplementation exactly on 100 random toy corpora, and every row has
/// unit L1 norm within 1e-9.
#[test]
fn criterion_3_context_distribution_oracle() {
    // Independent oracle: literal transcription of the distribution
    // definition, one index at a time.
    fn brute_force_row(index: u32, corpus: &[SparseSignature], n: usize) -> Option<Vec<f64>> {
        let mut accum = vec![0u64; n];
        let mut seen = false;
        for sig in corpus {
            if sig.entries().iter().any(|&(i, _)| i == index) {
                seen = true;
                for &(i, c) in sig.entries() {
                    accum[i as usize] += u64::from(c);
                }
            }
        }
        if !seen {
            return None;
        }
        let total: u64 = accum.iter().sum();
        Some(accum.iter().map(|&c| c as f64 / total as f64).collect())
    }

    for case in 0..100u64 {
        let mut r = rng(3000 + case);
        let n = r.gen_range(2..=8usize);
        let n_formulae = r.gen_range(1..=9usize);
        let mut corpus = Vec::new();
        for _ in 0..n_formulae {
            let mut entries = Vec::new();
            for i in 0..n as u32 {
                if r.gen_bool(0.5) {
                    entries.push((i, r.gen_range(1..=3u32)));
                }
            }
            if entries.is_empty() {
                entries.push((r.gen_range(0..n) as u32, 1));
            }
            corpus.push(SparseSignature::new(entries));
        }
        // Cover any index that no formula mentioned.
        let mut missing: Vec<(u32, u32)> = Vec::new();
        for i in 0..n as u32 {
            let covered = corpus
                .iter()
                .any(|s| s.entries().iter().any(|&(j, _)| j == i));
            if !covered {
                missing.push((i, 1));
            }
        }
        if !missing.is_empty() {
            corpus.push(SparseSignature::new(missing));
        }

        let matrix = context_matrix(&corpus, n).unwrap();
        assert_eq!(matrix.len(), n);
        for (i, row) in matrix.iter().enumerate() {
            let expected = brute_force_row(i as u32, &corpus, n).unwrap();
            assert_eq!(row.probs, expected, "case {case}, row {i}");
            let direct = context_distribution(i as u32, &corpus, n).unwrap();
            assert_eq!(direct.probs, expected, "case {case}, per-index {i}");
            let l1: f64 = row.probs.iter().sum();
            assert!((l1 - 1.0).abs() < 1e-9, "case {case}, row {i}: L1 {l1}");
        }
    }
    println!("criterion 3 PASS: 100 random corpora match the brute-force oracle exactly");
}

/// Criterion 4: embedding a one-hot signature reproduces the context model's
/// hidden activation bitwise; the pre-activation affine identity holds
/// within 1e-10 in 64-bit mode.
#[test]
fn criterion_4_embedding_identity() {
    let n = 12usize;
    let n_prime = 3usize;
    let mut r = rng(4000);
    let mut build_layers = |bias_scale: f64| {
        let mut hidden = DenseLayer::<f32>::he_uniform(n, n_prime, Activation::Tanh, &mut r);
        for b in &mut hidden.bias {
            *b = (r.gen_range(-bias_scale..bias_scale)) as f32;
        }
        let out = DenseLayer::he_uniform(n_prime, n, Activation::Softmax, &mut r);
        vec![hidden, out]
    };
    let model =
        ContextModel::new(DenseNetwork::new(build_layers(0.5), vec![0.0, 0.0]).unwrap()).unwrap();

    for k in 0..n {
        let one_hot = SparseSignature::new(vec![(k as u32, 1)]);
        let embedded = embed_signature(&model, &one_hot).unwrap();
        let pass = model
            .net()
            .forward_eval(BatchInput::OneHot {
                indices: vec![k],
                dim: n,
            })
            .unwrap();
        let hidden = pass.layer_output(0).row(0);
        assert_eq!(
            embedded.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            hidden.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "one-hot {k} not bitwise equal"
        );
    }

    // Affine identity in f64: pre(a*s1 + b*s2) = a*pre(s1) + b*pre(s2)
    // - (a + b - 1) * bias.
    let model64 = model.cast::<f64>();
    let bias = &model64.net().layers()[0].bias;
    let s1 = SparseSignature::new(vec![(0, 2), (5, 1), (9, 3)]);
    let s2 = SparseSignature::new(vec![(2, 4), (5, 2)]);
    let (a, b) = (3u32, 2u32);
    // 3*s1 + 2*s2 = {0:6, 2:8, 5:7, 9:9}
    let combined = SparseSignature::new(vec![(0, 6), (2, 8), (5, 7), (9, 9)]);
    let p1 = embed_preactivation(&model64, &s1).unwrap();
    let p2 = embed_preactivation(&model64, &s2).unwrap();
    let pc = embed_preactivation(&model64, &combined).unwrap();
    let mut max_dev: f64 = 0.0;
    for o in 0..n_prime {
        let expected = f64::from(a) * p1[o] + f64::from(b) * p2[o] - f64::from(a + b - 1) * bias[o];
        max_dev = max_dev.max((pc[o] - expected).abs());
    }
    assert!(max_dev < 1e-10, "affine identity deviation {max_dev}");
    println!(
        "criterion 4 PASS: 12 one-hot embeddings bitwise equal; affine identity within {max_dev:.2e}"
    );
}

/// Criterion 5: the (64,64) classifier reaches 95% train-set accuracy on
/// 2,000 linearly separable 512-dimensional rows within 200 epochs
/// (Adam 1e-4, batch 256, dropout 0.5 as specified).
#[test]
fn criterion_5_synthetic_learnability() {
    let mut r = rng(5000);
    let n_per_class = 1000usize;
    let dim = 512usize;
    let mut features = Tensor2::zeros(2 * n_per_class, dim);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for row in 0..2 * n_per_class {
        let class = row / n_per_class;
        let center = if class == 0 { -0.2 } else { 0.2 };
        for c in 0..dim {
            features.set(row, c, (center + r.gen_range(-1.0..1.0)) as f32);
        }
        labels.push(class as f32);
    }

    let spec = ClassifierSpec::new(64, 64).unwrap();
    let mut net = classifier::build_network(dim, &spec, &mut r);
    let mut opt = Optimizer::new(OptimizerKind::adam(1e-4), &net);
    let mut train_rng = rng(5001);
    let mut epochs_used = 0;
    let mut accuracy = 0.0;
    while epochs_used < 200 {
        let chunk = 10.min(200 - epochs_used);
        premsel::nn::train(
            &mut net,
            TrainInputs::Dense(&features),
            TrainTargets::Binary(&labels),
            LossKind::BinaryCrossEntropy,
            &mut opt,
            &TrainOptions::new(chunk, 256),
            &mut train_rng,
            None,
        )
        .unwrap();
        epochs_used += chunk;
        let (_, acc) = premsel::nn::train::evaluate_set(
            &net,
            TrainInputs::Dense(&features),
            TrainTargets::Binary(&labels),
            LossKind::BinaryCrossEntropy,
            1024,
        )
        .unwrap();
        accuracy = acc;
        if accuracy >= 0.95 {
            break;
        }
    }
    assert!(
        accuracy >= 0.95,
        "train accuracy {accuracy} after {epochs_used} epochs"
    );
    println!(
        "criterion 5 PASS: {:.2}% train accuracy after {epochs_used} epochs",
        accuracy * 100.0
    );
}

fn dataset_path_from_env() -> Option<PathBuf> {
    std::env::var_os("PREMSEL_DATASET").map(PathBuf::from)
}

/// Criterion 6: corpus-scale counts on the real dataset (enabled by setting
/// `PREMSEL_DATASET` to the corpus file).
#[test]
fn criterion_6_dataset_scale_counts() {
    let Some(path) = dataset_path_from_env() else {
        println!("criterion 6 SKIP: set PREMSEL_DATASET to the corpus file to enable");
        return;
    };
    let text = fs::read_to_string(&path).expect("readable corpus");
    let blocks = parse_dataset_stream(&text).expect("parsable corpus");
    let stats = corpus_statistics(&blocks).expect("non-empty corpus");
    assert_eq!(stats.blocks, 32_524, "conjecture count");
    assert_eq!(stats.unique_formulae, 102_442, "unique formula count");
    assert_eq!(stats.pairs, 522_528, "pair count");
    assert_eq!(stats.min_axioms, 2, "min axioms per conjecture");
    assert_eq!(stats.max_axioms, 270, "max axioms per conjecture");

    let mut seen = std::collections::HashSet::new();
    let mut counts = Vec::new();
    for block in &blocks {
        for f in std::iter::once(&block.conjecture)
            .chain(&block.positives)
            .chain(&block.negatives)
        {
            if seen.insert(f.as_str()) {
                counts.push(extract_functors(f).expect("tokenizable formula"));
            }
        }
    }
    let vocab = premsel::signatures::FunctorVocab::build(counts.iter());
    assert_eq!(vocab.len(), 13_217, "vocabulary size");

    assert_eq!(split_counts(stats.pairs, 0.1), (470_275, 52_253));

    let positives: usize = blocks.iter().map(|b| b.positives.len()).sum();
    let positive_fraction = positives as f64 / stats.pairs as f64;
    assert!(
        (0.45..=0.55).contains(&positive_fraction),
        "positive fraction {positive_fraction}"
    );
    println!(
        "criterion 6 PASS: 32524 blocks, 102442 unique formulae, 522528 pairs, vocab 13217, \
         split 470275/52253, positive fraction {positive_fraction:.4}"
    );
}

/// Criterion 7 (mandatory reduced check, CI-nightly): on the full pair data,
/// spec 512x128 reaches at least 70% test accuracy after 100 epochs.
/// Run with: PREMSEL_DATASET=... cargo test -p premsel --test acceptance -- --ignored criterion_7_reduced
#[test]
#[ignore = "hours of CPU training; nightly only"]
fn criterion_7_reduced_full_scale_nightly() {
    let path = dataset_path_from_env().expect("PREMSEL_DATASET must point at the corpus");
    let tmp = tempfile::tempdir().unwrap();
    let cfg_file = tmp.path().join("full.cfg");
    fs::write(
        &cfg_file,
        format!(
            "data.path = {}\nclassifier.specs = 512x128\nclassifier.protocol = final\nclassifier.epochs = 100\n",
            path.display()
        ),
    )
    .unwrap();
    let cfg = PipelineConfig::load(
        Some(&cfg_file),
        &Overrides {
            work_dir: Some(tmp.path().join("work")),
            ..Default::default()
        },
    )
    .unwrap();
    let pipeline = Pipeline::new(cfg).unwrap();
    pipeline.fetch().unwrap();
    pipeline.extract().unwrap();
    pipeline.context().unwrap();
    pipeline.embed().unwrap();
    pipeline.pairs().unwrap();
    pipeline.train().unwrap();
    pipeline.eval().unwrap();
    let spec = ClassifierSpec::new(512, 128).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(pipeline.eval_report_path(&spec)).unwrap())
            .unwrap();
    let accuracy = report["accuracy"].as_f64().unwrap();
    assert!(accuracy >= 0.70, "512x128 test accuracy {accuracy}");
    println!(
        "criterion 7 PASS: 512x128 test accuracy {:.2}%",
        accuracy * 100.0
    );
}

/// Criterion 7 (optional full-protocol check): 1024x1024 under the complete
/// 2500-epoch protocol lands within 2.5 accuracy points of 76.45%, and the
/// context model within 5 points of 84%.
#[test]
#[ignore = "days of CPU training; optional full reproduction"]
fn criterion_7_full_protocol_reproduction() {
    let path = dataset_path_from_env().expect("PREMSEL_DATASET must point at the corpus");
    let tmp = tempfile::tempdir().unwrap();
    let cfg_file = tmp.path().join("full.cfg");
    fs::write(
        &cfg_file,
        format!(
            "data.path = {}\nclassifier.specs = 1024x1024\nclassifier.protocol = final\n",
            path.display()
        ),
    )
    .unwrap();
    let cfg = PipelineConfig::load(
        Some(&cfg_file),
        &Overrides {
            work_dir: Some(tmp.path().join("work")),
            ..Default::default()
        },
    )
    .unwrap();
    let pipeline = Pipeline::new(cfg).unwrap();
    pipeline.fetch().unwrap();
    pipeline.extract().unwrap();
    pipeline.context().unwrap();
    pipeline.embed().unwrap();

    // Context-model training accuracy from the last history line.
    let history = fs::read_to_string(pipeline.embed_history_path()).unwrap();
    let last: serde_json::Value = serde_json::from_str(history.lines().last().unwrap()).unwrap();
    let context_acc = last["accuracy"].as_f64().unwrap();
    assert!(
        (context_acc - 0.84).abs() <= 0.05,
        "context-model accuracy {context_acc}"
    );

    pipeline.pairs().unwrap();
    pipeline.train().unwrap();
    pipeline.eval().unwrap();
    let spec = ClassifierSpec::new(1024, 1024).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(pipeline.eval_report_path(&spec)).unwrap())
            .unwrap();
    let accuracy = report["accuracy"].as_f64().unwrap();
    assert!(
        (accuracy - 0.7645).abs() <= 0.025,
        "1024x1024 test accuracy {accuracy}"
    );
    println!(
        "criterion 7 PASS: context accuracy {:.2}%, 1024x1024 test accuracy {:.2}%",
        context_acc * 100.0,
        accuracy * 100.0
    );
}

/// Criterion 7 marker for default runs.
#[test]
fn criterion_7_deferred_to_nightly() {
    println!(
        "criterion 7 DEFERRED: full-scale reproduction runs under --ignored with PREMSEL_DATASET set"
    );
}

fn artifact_snapshot(work: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![work.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(work)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                if rel != ".lock" {
                    out.insert(rel, fs::read(&path).unwrap());
                }
            }
        }
    }
    out
}

/// Criterion 8: the whole pipeline run twice with the same seed in
/// deterministic mode produces byte-identical artifacts and metric files.
#[test]
fn criterion_8_pipeline_determinism() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy_dataset.txt");
    let run = |root: &Path| -> BTreeMap<String, Vec<u8>> {
        let cfg_file = root.join("toy.cfg");
        fs::write(
            &cfg_file,
            format!(
                "data.path = {}\nseed = 11\ndeterministic = true\n\
                 embed.n_prime = 4\nembed.epochs = 30\nembed.batch = 8\n\
                 classifier.specs = 64x64,128x64\nclassifier.protocol = dev\n\
                 classifier.epochs = 10\nclassifier.batch = 8\njobs = 2\n",
                fixture.display()
            ),
        )
        .unwrap();
        let cfg = PipelineConfig::load(
            Some(&cfg_file),
            &Overrides {
                work_dir: Some(root.join("work")),
                ..Default::default()
            },
        )
        .unwrap();
        let pipeline = Pipeline::new(cfg).unwrap();
        pipeline.fetch().unwrap();
        pipeline.extract().unwrap();
        pipeline.context().unwrap();
        pipeline.embed().unwrap();
        pipeline.pairs().unwrap();
        pipeline.train().unwrap();
        pipeline.eval().unwrap();
        pipeline.grid().unwrap();
        pipeline.report().unwrap();
        artifact_snapshot(&root.join("work"))
    };

    let tmp_a = tempfile::tempdir().unwrap();
    let tmp_b = tempfile::tempdir().unwrap();
    let a = run(tmp_a.path());
    let b = run(tmp_b.path());
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "artifact sets differ"
    );
    let mut compared = 0;
    for (name, bytes) in &a {
        assert_eq!(bytes, &b[name], "artifact {name} differs between runs");
        compared += 1;
    }
    println!("criterion 8 PASS: {compared} artifacts byte-identical across two seeded runs");
}

/// Criterion 9: 1,000 randomized save/load round-trips preserve forward
/// outputs bitwise, and corrupted files always fail with a typed error.
#[test]
fn criterion_9_serialization_roundtrips() {
    use premsel::nn::io::{model_from_bytes, model_to_bytes};
    use premsel::nn::NnError;

    let activations = [
        Activation::Tanh,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Identity,
    ];
    let mut roundtrips = 0;
    for case in 0..1000u64 {
        let mut r = rng(9000 + case);
        let input = r.gen_range(1..6usize);
        let hidden = r.gen_range(1..7usize);
        let out = r.gen_range(1..4usize);
        let act = activations[r.gen_range(0..activations.len())];
        let layers = vec![
            DenseLayer::<f32>::he_uniform(input, hidden, act, &mut r),
            DenseLayer::he_uniform(hidden, out, Activation::Softmax, &mut r),
        ];
        let dropout = if r.gen_bool(0.5) { 0.5 } else { 0.0 };
        let net = DenseNetwork::new(layers, vec![dropout, 0.0]).unwrap();

        let bytes = model_to_bytes(&net);
        let restored = model_from_bytes(&bytes).unwrap();
        let mut batch = Tensor2::zeros(3, input);
        for v in batch.data_mut() {
            *v = r.gen_range(-2.0..2.0f64) as f32;
        }
        let original = net.forward_eval(BatchInput::Dense(batch.clone())).unwrap();
        let reloaded = restored.forward_eval(BatchInput::Dense(batch)).unwrap();
        assert_eq!(
            original
                .output()
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            reloaded
                .output()
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            "case {case} forward output changed"
        );
        assert_eq!(restored.dropout_rates(), net.dropout_rates());
        roundtrips += 1;

        // Corruption: flip one byte, or truncate; both must be rejected.
        let mut corrupted = bytes.clone();
        let pos = r.gen_range(0..corrupted.len());
        corrupted[pos] ^= 1 << r.gen_range(0..8);
        assert!(
            matches!(
                model_from_bytes(&corrupted),
                Err(NnError::BadMagic | NnError::ChecksumMismatch | NnError::VersionMismatch(_))
            ),
            "case {case}: corrupted file at byte {pos} was accepted"
        );
        let cut = r.gen_range(0..bytes.len());
        assert!(
            model_from_bytes(&bytes[..cut]).is_err(),
            "case {case}: truncation to {cut} bytes was accepted"
        );
    }

    // A couple of real file round-trips through the public path API.
    let tmp = tempfile::tempdir().unwrap();
    for case in 0..3u64 {
        let mut r = rng(9500 + case);
        let layers = vec![DenseLayer::<f32>::he_uniform(
            4,
            2,
            Activation::Sigmoid,
            &mut r,
        )];
        let net = DenseNetwork::new(layers, vec![0.0]).unwrap();
        let path = tmp.path().join(format!("model_{case}.psnn"));
        premsel::nn::save_model(&net, &path).unwrap();
        let restored = premsel::nn::load_model(&path).unwrap();
        assert_eq!(
            restored.layers()[0].weights.data(),
            net.layers()[0].weights.data()
        );
    }
    println!("criterion 9 PASS: {roundtrips} bitwise round-trips; corruption always rejected");
}
