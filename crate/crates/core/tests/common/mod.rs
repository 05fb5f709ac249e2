//! Synthetic 28x28 ten-class data for tests that cannot rely on MNIST.
#![allow(dead_code)]

use std::path::Path;

use pcnet::dataio::{
    encode_idx_images, encode_idx_labels, DatasetSplit, IMAGE_SIDE, NUM_CLASSES, TEST_IMAGES, TEST_LABELS,
    TRAIN_IMAGES, TRAIN_LABELS,
};
use pcnet::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Class `k` lights a horizontal bar at rows `2k..2k+4` and a vertical bar
/// at columns `27-2k-3..27-2k`, over uniform background noise. Pixels are
/// quantized to bytes so the split survives an IDX round trip unchanged.
pub fn synthetic_split(name: &str, n: usize, seed: u64) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = IMAGE_SIDE;
    let mut images = Matrix::zeros(side * side, n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let k = rng.gen_range(0..NUM_CLASSES);
        labels.push(k as u8);
        for r in 0..side {
            for c in 0..side {
                let on = (2 * k..2 * k + 4).contains(&r) || (side - 2 * k - 4..side - 2 * k).contains(&c);
                let base = if on { rng.gen_range(0.6..1.0) } else { rng.gen_range(0.0..0.25) };
                let px = (base * 255.0_f64).round() / 255.0;
                images.set(r * side + c, j, px);
            }
        }
    }
    DatasetSplit::new(name, images, labels).unwrap()
}

pub fn write_split(dir: &Path, split: &DatasetSplit, train: bool) {
    let (img, lbl) = if train {
        (TRAIN_IMAGES, TRAIN_LABELS)
    } else {
        (TEST_IMAGES, TEST_LABELS)
    };
    std::fs::write(dir.join(img), encode_idx_images(&split.images, IMAGE_SIDE, IMAGE_SIDE).unwrap()).unwrap();
    std::fs::write(dir.join(lbl), encode_idx_labels(&split.labels)).unwrap();
}

/// Write a train and a test split in the standard IDX layout.
pub fn write_dataset(dir: &Path, n_train: usize, n_test: usize, seed: u64) {
    write_split(dir, &synthetic_split("train", n_train, seed), true);
    write_split(dir, &synthetic_split("test", n_test, seed + 1), false);
}

use pcnet::encodings::{Bias, ErrorEncoding, ErrorSignal};
use pcnet::linalg::ActivationKind;
use pcnet::network::{FeedbackScheme, ModelSpec, PcNetwork};

fn random_dims(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let depth = rng.gen_range(2..=4);
    (0..=depth).map(|_| rng.gen_range(2..=8)).collect()
}

/// A random positive-activity network whose encoding is compatible with its
/// activations: division needs non-negative predictions, thresholds need
/// predictions bounded by `1 + b`.
pub fn random_positive_spec(rng: &mut ChaCha8Rng) -> ModelSpec {
    let bias = Bias::new(rng.gen_range(0.0..0.5)).unwrap();
    let feedback = match rng.gen_range(0..3) {
        0 => FeedbackScheme::Transpose,
        1 => FeedbackScheme::RandomFixed,
        _ => FeedbackScheme::KolenPollack { gamma: 0.01 },
    };
    let (encoding, acts): (ErrorEncoding, &[ActivationKind]) = match rng.gen_range(0..3) {
        0 => (ErrorEncoding::Subtractive, &ActivationKind::ALL),
        1 => (
            ErrorEncoding::threshold_for_bias(bias),
            &[ActivationKind::Sigmoid, ActivationKind::Tanh],
        ),
        _ => (ErrorEncoding::division(), &[ActivationKind::Sigmoid, ActivationKind::Relu]),
    };
    ModelSpec {
        dims: random_dims(rng),
        hidden_activation: acts[rng.gen_range(0..acts.len())],
        output_activation: ActivationKind::Sigmoid,
        bias,
        encoding,
        feedback,
        positive_activities: true,
        encode_output: rng.gen_bool(0.5),
    }
}

/// Inputs in `[0, 1)` and one-hot targets.
pub fn random_data(dims: &[usize], batch: usize, rng: &mut ChaCha8Rng) -> (Matrix, Matrix) {
    let x = Matrix::from_fn(dims[0], batch, |_, _| rng.gen_range(0.0..1.0));
    let top = *dims.last().unwrap();
    let mut y = Matrix::zeros(top, batch);
    for c in 0..batch {
        y.set(rng.gen_range(0..top), c, 1.0);
    }
    (x, y)
}

fn error_rates_ok(sig: &ErrorSignal) -> bool {
    match sig {
        ErrorSignal::Subtractive(_) => true,
        ErrorSignal::Threshold { encoded, .. } => encoded.data().iter().all(|v| *v >= 0.0),
        ErrorSignal::Division { ratio, .. } => ratio.data().iter().all(|v| *v > 0.0),
    }
}

/// Relax a random positive network and check after every step that all
/// activities are non-negative and that threshold and division error
/// neurons carry non-negative (division: strictly positive) rates.
pub fn positivity_trial(seed: u64, steps: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_positive_spec(&mut rng);
    let net = PcNetwork::init(spec.clone(), seed).map_err(|e| e.to_string())?;
    let batch = rng.gen_range(1..=4);
    let (x, y) = random_data(&spec.dims, batch, &mut rng);
    let mut state = net.init_forward(&x).map_err(|e| e.to_string())?;
    net.clamp_output(&mut state, &y).map_err(|e| e.to_string())?;
    for step in 0..=steps {
        if step > 0 {
            net.activity_step(&mut state, 0.1).map_err(|e| format!("{spec:?}: {e}"))?;
        }
        for l in 0..=net.depth() {
            if state.activity(l).data().iter().any(|v| *v < 0.0) {
                return Err(format!("negative activity at level {l} after step {step}: {spec:?}"));
            }
        }
        for l in 1..=net.depth() {
            if !error_rates_ok(state.error(l)) {
                return Err(format!("negative error rate at level {l} after step {step}: {spec:?}"));
            }
        }
    }
    Ok(())
}

/// Input and clamped output levels are bit-identical after `steps`
/// relaxation steps.
pub fn clamp_trial(seed: u64, steps: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = random_positive_spec(&mut rng);
    spec.positive_activities = rng.gen_bool(0.5) || spec.encoding.is_division();
    let net = PcNetwork::init(spec.clone(), seed).map_err(|e| e.to_string())?;
    let (x, y) = random_data(&spec.dims, 3, &mut rng);
    let mut state = net.init_forward(&x).map_err(|e| e.to_string())?;
    net.clamp_output(&mut state, &y).map_err(|e| e.to_string())?;
    let top = net.depth();
    let (a0, at) = (state.activity(0).clone(), state.activity(top).clone());
    for _ in 0..steps {
        net.activity_step(&mut state, 0.1).map_err(|e| e.to_string())?;
    }
    let same = |a: &Matrix, b: &Matrix| a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());
    if same(state.activity(0), &a0) && same(state.activity(top), &at) && state.activity(top) == &y {
        Ok(())
    } else {
        Err(format!("clamped level changed: {spec:?}"))
    }
}

/// Whether the subtractive, transpose-feedback energy never increases over
/// `steps` relaxation steps at rate `beta` for one random network.
pub fn energy_descends(seed: u64, beta: f64, steps: usize) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ModelSpec {
        dims: random_dims(&mut rng),
        hidden_activation: if rng.gen_bool(0.5) { ActivationKind::Sigmoid } else { ActivationKind::Tanh },
        ..Default::default()
    };
    let net = PcNetwork::init(spec.clone(), seed).unwrap();
    let (x, y) = random_data(&spec.dims, 4, &mut rng);
    let mut state = net.init_forward(&x).unwrap();
    net.clamp_output(&mut state, &y).unwrap();
    let mut prev = net.objective(&state);
    for _ in 0..steps {
        net.activity_step(&mut state, beta).unwrap();
        let e = net.objective(&state);
        if e > prev {
            return false;
        }
        prev = e;
    }
    true
}

pub fn energy_descent_fraction(trials: u64, beta: f64, steps: usize) -> f64 {
    let ok = (0..trials).filter(|&s| energy_descends(1000 + s, beta, steps)).count();
    ok as f64 / trials as f64
}

use pcnet::config::{ModelKind, RawConfig, TrainConfig};
use pcnet::train::{build_learner, Learner};

/// Resolve a configuration from `key = value` text.
pub fn config(text: &str) -> TrainConfig {
    TrainConfig::resolve(&RawConfig::parse(text).unwrap()).unwrap()
}

/// Largest absolute difference between the output-layer increments of a
/// predictive-coding learner with no relaxation steps and a backprop
/// learner that start from the same weights and see the same batch.
pub fn first_update_gap(seed: u64, batch: usize, hidden_dims: &str) -> f64 {
    let base = format!("seed = {seed}\nn_updates = 0\nhidden_dims = {hidden_dims}\n");
    let mut pc: Learner = build_learner(&config(&base)).unwrap();
    let mut bp: Learner = build_learner(&config(&format!("{base}model = bp\n"))).unwrap();
    assert_eq!(pc.model.kind(), ModelKind::Pc);
    assert_eq!(pc.model.weights(), bp.model.weights());
    let split = synthetic_split("train", batch, seed);
    let idx: Vec<usize> = (0..batch).collect();
    let (x, y, _) = split.batch(&idx).unwrap();
    let a = pc.train_batch(&x, &y).unwrap();
    let b = bp.train_batch(&x, &y).unwrap();
    let top = a.increments.len() - 1;
    a.increments[top]
        .data()
        .iter()
        .zip(b.increments[top].data())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

pub fn max_weight_gap(a: &[Matrix], b: &[Matrix]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| p.data().iter().zip(q.data()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}
