//! Adam and plain SGD over weight-update directions.
//!
//! Callers pass descent directions (already pointing downhill), and both
//! optimizers return the increment to add to the parameter.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("adam eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Adam moments for a single parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Matrix,
    v: Matrix,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, rows: usize, cols: usize) -> Self {
        AdamState {
            config,
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            step: 0,
        }
    }

    pub fn for_param(config: AdamConfig, param: &Matrix) -> Self {
        Self::new(config, param.rows(), param.cols())
    }

    pub fn from_parts(config: AdamConfig, m: Matrix, v: Matrix, step: u64) -> Result<Self> {
        if m.shape() != v.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam moments",
                left: m.shape(),
                right: v.shape(),
            });
        }
        Ok(AdamState { config, m, v, step })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Matrix {
        &self.m
    }

    pub fn second_moment(&self) -> &Matrix {
        &self.v
    }

    /// Bias-corrected Adam increment for one descent direction.
    pub fn step(&mut self, direction: &Matrix) -> Result<Matrix> {
        if direction.shape() != self.m.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: self.m.shape(),
                right: direction.shape(),
            });
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let mut inc = Matrix::zeros(direction.rows(), direction.cols());
        let it = self
            .m
            .data_mut()
            .iter_mut()
            .zip(self.v.data_mut().iter_mut())
            .zip(direction.data())
            .zip(inc.data_mut().iter_mut());
        for (((m, v), &g), out) in it {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *out = lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(inc)
    }
}

pub fn sgd_step(lr: f64, direction: &Matrix) -> Matrix {
    direction.scale(lr)
}

/// Which update rule turns weight directions into increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

/// One optimizer per forward weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerSet {
    Adam(Vec<AdamState>),
    Sgd { lr: f64 },
}

impl OptimizerSet {
    pub fn new(kind: OptimizerKind, config: AdamConfig, params: &[Matrix]) -> Self {
        match kind {
            OptimizerKind::Adam => {
                OptimizerSet::Adam(params.iter().map(|p| AdamState::for_param(config, p)).collect())
            }
            OptimizerKind::Sgd => OptimizerSet::Sgd { lr: config.lr },
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptimizerSet::Adam(_) => OptimizerKind::Adam,
            OptimizerSet::Sgd { .. } => OptimizerKind::Sgd,
        }
    }

    pub fn increments(&mut self, directions: &[Matrix]) -> Result<Vec<Matrix>> {
        match self {
            OptimizerSet::Adam(states) => {
                if states.len() != directions.len() {
                    return Err(Error::Config(format!(
                        "{} optimizer states for {} directions",
                        states.len(),
                        directions.len()
                    )));
                }
                states.iter_mut().zip(directions).map(|(s, d)| s.step(d)).collect()
            }
            OptimizerSet::Sgd { lr } => Ok(directions.iter().map(|d| sgd_step(*lr, d)).collect()),
        }
    }
}
