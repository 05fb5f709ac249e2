//! Minibatch training for both model kinds, test-set evaluation and the
//! per-epoch metrics table.
//!
//! A predictive-coding batch runs: feed-forward init, clamp the target,
//! `n` relaxation steps, weight directions, optimizer, apply (with the
//! Kolen-Pollack coupling when configured). The baseline runs forward,
//! backward, optimizer, apply.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::baseline::Mlp;
use crate::config::{ModelKind, TrainConfig};
use crate::dataio::{one_hot, BatchPlan, DatasetSplit, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::PcNetwork;
use crate::optim::{AdamConfig, OptimizerSet};

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Pc(PcNetwork),
    Mlp(Mlp),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Pc(_) => ModelKind::Pc,
            Model::Mlp(_) => ModelKind::Bp,
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            Model::Pc(n) => n.dims(),
            Model::Mlp(m) => m.dims(),
        }
    }

    pub fn weights(&self) -> &[Matrix] {
        match self {
            Model::Pc(n) => n.weights(),
            Model::Mlp(m) => m.weights(),
        }
    }

    /// Pure forward sweep.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Model::Pc(n) => n.predict(x),
            Model::Mlp(m) => m.predict(x),
        }
    }
}

/// Activity relaxation settings for predictive-coding batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxation {
    pub beta: f64,
    pub n_updates: usize,
}

#[derive(Debug, Clone)]
pub struct BatchStats {
    /// Objective at the moment of the weight update (relaxed energy or
    /// division cost for PC, squared-error loss for the baseline).
    pub objective: f64,
    /// Samples whose feed-forward output missed the target's argmax.
    pub misclassified: usize,
    /// Increments that were applied to the forward weights.
    pub increments: Vec<Matrix>,
}

/// A model together with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub model: Model,
    pub optimizer: OptimizerSet,
    pub relaxation: Relaxation,
}

fn count_misses(output: &Matrix, y: &Matrix) -> usize {
    output
        .argmax_columns()
        .iter()
        .zip(y.argmax_columns())
        .filter(|(a, b)| **a != *b)
        .count()
}

impl Learner {
    pub fn new(model: Model, optimizer: OptimizerSet, relaxation: Relaxation) -> Self {
        Learner {
            model,
            optimizer,
            relaxation,
        }
    }

    pub fn train_batch(&mut self, x: &Matrix, y: &Matrix) -> Result<BatchStats> {
        let Relaxation { beta, n_updates } = self.relaxation;
        match &mut self.model {
            Model::Pc(net) => {
                let mut state = net.init_forward(x)?;
                let misclassified = count_misses(state.activity(net.depth()), y);
                net.clamp_output(&mut state, y)?;
                for _ in 0..n_updates {
                    net.activity_step(&mut state, beta)?;
                }
                let objective = net.objective(&state);
                let directions = net.weight_update_direction(&state)?;
                let increments = self.optimizer.increments(&directions)?;
                net.apply_increments(&increments)?;
                Ok(BatchStats {
                    objective,
                    misclassified,
                    increments,
                })
            }
            Model::Mlp(mlp) => {
                let pass = mlp.forward(x)?;
                let misclassified = count_misses(pass.output(), y);
                let objective = Mlp::loss(&pass, y)?;
                let directions: Vec<Matrix> = mlp
                    .backward_from(&pass, y)?
                    .into_iter()
                    .map(|g| g.map(|v| -v))
                    .collect();
                let increments = self.optimizer.increments(&directions)?;
                mlp.apply_increments(&increments)?;
                Ok(BatchStats {
                    objective,
                    misclassified,
                    increments,
                })
            }
        }
    }
}

/// Build a fresh learner from a resolved configuration.
pub fn build_learner(config: &TrainConfig) -> Result<Learner> {
    let spec = config.model_spec()?;
    let model = match config.model {
        ModelKind::Pc => Model::Pc(PcNetwork::init(spec, config.seed)?),
        ModelKind::Bp => Model::Mlp(Mlp::init(
            &spec.dims,
            spec.hidden_activation,
            spec.output_activation,
            spec.bias,
            config.seed,
        )?),
    };
    let adam = AdamConfig::with_lr(config.lr);
    adam.validate()?;
    let optimizer = OptimizerSet::new(config.optimizer, adam, model.weights());
    Ok(Learner::new(
        model,
        optimizer,
        Relaxation {
            beta: config.beta,
            n_updates: config.n_updates,
        },
    ))
}

/// Classification error and mean squared output error of the pure forward
/// sweep over a whole split.
pub fn evaluate(model: &Model, split: &DatasetSplit) -> Result<(f64, f64)> {
    const CHUNK: usize = 1000;
    if split.features() != model.dims()[0] {
        return Err(Error::Dataset(format!(
            "{} split has {} features but the model expects {}",
            split.name,
            split.features(),
            model.dims()[0]
        )));
    }
    if *model.dims().last().expect("dims") != NUM_CLASSES {
        return Err(Error::Dataset(format!(
            "model has {} outputs, evaluation needs {NUM_CLASSES}",
            model.dims().last().expect("dims")
        )));
    }
    let n = split.len();
    let mut misses = 0;
    let mut sq = 0.0;
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let x = split.images.select_columns(&idx)?;
        let out = model.predict(&x)?;
        let labels: Vec<u8> = idx.iter().map(|&i| split.labels[i]).collect();
        let y = one_hot(&labels, NUM_CLASSES)?;
        misses += count_misses(&out, &y);
        sq += y.sub(&out)?.sum_squares();
    }
    Ok((misses as f64 / n as f64, 0.5 * sq / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Dataset(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: Split,
    pub error: f64,
    pub objective: f64,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,split,error,objective,seconds";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.split, self.error, self.objective, self.seconds
        )
    }

    pub fn parse_row(line: &str) -> Result<Self> {
        let bad = || Error::Dataset(format!("malformed metrics row '{line}'"));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        Ok(EpochMetrics {
            epoch: f[0].parse().map_err(|_| bad())?,
            split: f[1].parse()?,
            error: f[2].parse().map_err(|_| bad())?,
            objective: f[3].parse().map_err(|_| bad())?,
            seconds: f[4].parse().map_err(|_| bad())?,
        })
    }
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Dataset(format!("{}: missing metrics header", path.display())));
    }
    lines.filter(|l| !l.trim().is_empty()).map(EpochMetrics::parse_row).collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub learner: Learner,
    pub metrics: Vec<EpochMetrics>,
    pub epochs: usize,
}

/// Full training run: for each epoch, every minibatch of the seeded plan,
/// then a test evaluation. `on_epoch` sees each metrics row as it is
/// produced.
pub fn run(
    config: &TrainConfig,
    train: &DatasetSplit,
    test: &DatasetSplit,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    let mut learner = build_learner(config)?;
    if train.features() != learner.model.dims()[0] {
        return Err(Error::Dataset(format!(
            "training images have {} features, network input is {}",
            train.features(),
            learner.model.dims()[0]
        )));
    }
    let plan = BatchPlan::new(config.batch_size, config.seed)?;
    let mut metrics = Vec::with_capacity(2 * config.epochs);
    let clock = |t: Instant| if config.wall_time { t.elapsed().as_secs_f64() } else { 0.0 };
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut misses = 0;
        let mut objective = 0.0;
        let batches = plan.batches(epoch - 1, train.len());
        for idx in &batches {
            let (x, y, _) = train.batch(idx)?;
            let stats = learner.train_batch(&x, &y)?;
            misses += stats.misclassified;
            objective += stats.objective * idx.len() as f64;
        }
        let row = EpochMetrics {
            epoch,
            split: Split::Train,
            error: misses as f64 / train.len() as f64,
            objective: objective / train.len() as f64,
            seconds: clock(started),
        };
        on_epoch(&row);
        metrics.push(row);

        let started = Instant::now();
        let (error, objective) = evaluate(&learner.model, test)?;
        let row = EpochMetrics {
            epoch,
            split: Split::Test,
            error,
            objective,
            seconds: clock(started),
        };
        on_epoch(&row);
        metrics.push(row);
    }
    Ok(TrainOutcome {
        learner,
        metrics,
        epochs: config.epochs,
    })
}

/// Mean test error over the last `k` epochs of a metrics table.
pub fn tail_test_error(metrics: &[EpochMetrics], k: usize) -> Option<f64> {
    let test: Vec<f64> = metrics
        .iter()
        .filter(|m| m.split == Split::Test)
        .map(|m| m.error)
        .collect();
    if test.is_empty() {
        return None;
    }
    let tail = &test[test.len().saturating_sub(k)..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}
