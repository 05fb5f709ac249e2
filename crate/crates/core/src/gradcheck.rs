//! Central finite-difference check of the network's activity and weight
//! directions against the objective they are supposed to descend.
//!
//! The objective is the batch-averaged total cost, so the per-sample
//! activity direction is compared against `-batch * dJ/da` and the weight
//! direction against `-dJ/dW`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linalg::Matrix;
use crate::network::{ModelSpec, NetworkState, PcNetwork};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub spec: ModelSpec,
    pub batch: usize,
    /// Finite-difference step.
    pub h: f64,
    /// Relaxation steps taken before checking, so hidden errors are nonzero.
    pub warmup_steps: usize,
    pub beta: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl GradcheckConfig {
    /// Dims `[5, 4, 3]`, batch 2, `h = 1e-6`, with every other modelling
    /// choice taken from `spec`.
    pub fn small(spec: &ModelSpec, seed: u64) -> Self {
        GradcheckConfig {
            spec: ModelSpec {
                dims: vec![5, 4, 3],
                ..spec.clone()
            },
            batch: 2,
            h: 1e-6,
            warmup_steps: 3,
            beta: 0.1,
            tolerance: DEFAULT_TOLERANCE,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Activity,
    Weight,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Quantity::Activity => "activity",
            Quantity::Weight => "weight",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Non-transpose feedback does not follow the gradient by construction.
    ApproximateFeedback,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "ok",
            Verdict::Fail => "FAIL",
            Verdict::ApproximateFeedback => "approximate feedback (expected)",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub quantity: Quantity,
    /// Activity level, or the index of `W_l`.
    pub layer: usize,
    pub rel_error: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub encoding: String,
    pub feedback: String,
    pub tolerance: f64,
    pub checks: Vec<LayerCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    /// Largest relative error among the checks that are expected to match.
    pub fn max_rel_error(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.verdict != Verdict::ApproximateFeedback)
            .map(|c| c.rel_error)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradcheck: encoding={} feedback={} tolerance={:e}",
            self.encoding, self.feedback, self.tolerance
        )?;
        for c in &self.checks {
            let name = match c.quantity {
                Quantity::Activity => format!("a[{}]", c.layer),
                Quantity::Weight => format!("W[{}]", c.layer),
            };
            writeln!(f, "  {:<8} {:<5} max rel error {:.3e}  {}", c.quantity, name, c.rel_error, c.verdict)?;
        }
        write!(
            f,
            "max relative error {:.3e}: {}",
            self.max_rel_error(),
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// `max|a - b| / max(max|a|, max|b|)`, zero when both are zero.
pub fn relative_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    let diff = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = analytic.max_abs().max(numeric.max_abs());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn objective_with_activity(
    net: &PcNetwork,
    state: &NetworkState,
    level: usize,
    a: Matrix,
) -> Result<f64> {
    let mut s = state.clone();
    s.set_activity(level, a)?;
    net.refresh(&mut s)?;
    Ok(net.objective(&s))
}

fn objective_with_weight(net: &PcNetwork, state: &NetworkState, layer: usize, w: Matrix) -> Result<f64> {
    let mut n = net.clone();
    n.weights_mut()[layer] = w;
    let mut s = state.clone();
    n.refresh(&mut s)?;
    Ok(n.objective(&s))
}

/// Numerical `-scale * dJ/dX` for one matrix, where `eval` returns the
/// objective for a perturbed copy of `x`.
fn numeric_direction(x: &Matrix, h: f64, scale: f64, mut eval: impl FnMut(Matrix) -> Result<f64>) -> Result<Matrix> {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let mut plus = x.clone();
            plus.set(r, c, x.get(r, c) + h);
            let mut minus = x.clone();
            minus.set(r, c, x.get(r, c) - h);
            let d = (eval(plus)? - eval(minus)?) / (2.0 * h);
            out.set(r, c, -scale * d);
        }
    }
    Ok(out)
}

/// Random inputs in `(0, 1)` and soft targets in `[0.05, 0.95]`.
pub fn random_batch(dims: &[usize], batch: usize, rng: &mut impl Rng) -> (Matrix, Matrix) {
    let x = Matrix::from_fn(dims[0], batch, |_, _| rng.gen_range(0.0..1.0));
    let top = *dims.last().expect("dims");
    let y = Matrix::from_fn(top, batch, |_, _| rng.gen_range(0.05..0.95));
    (x, y)
}

pub fn gradcheck(config: &GradcheckConfig) -> Result<GradcheckReport> {
    let spec = config.spec.clone();
    spec.validate()?;
    let net = PcNetwork::init(spec.clone(), config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6772_6164);
    let (x, y) = random_batch(&spec.dims, config.batch, &mut rng);
    let mut state = net.init_forward(&x)?;
    net.clamp_output(&mut state, &y)?;
    for _ in 0..config.warmup_steps {
        net.activity_step(&mut state, config.beta)?;
    }

    let grade = |rel: f64| {
        if rel <= config.tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    let mut checks = Vec::new();
    let batch = config.batch as f64;
    for (l, analytic) in (1..).zip(net.activity_directions(&state)?) {
        let numeric = numeric_direction(state.activity(l), config.h, batch, |a| {
            objective_with_activity(&net, &state, l, a)
        })?;
        let rel_error = relative_error(&analytic, &numeric);
        let verdict = if spec.feedback.is_exact() {
            grade(rel_error)
        } else {
            Verdict::ApproximateFeedback
        };
        checks.push(LayerCheck {
            quantity: Quantity::Activity,
            layer: l,
            rel_error,
            verdict,
        });
    }
    for (l, analytic) in net.weight_update_direction(&state)?.into_iter().enumerate() {
        let numeric = numeric_direction(&net.weights()[l], config.h, 1.0, |w| {
            objective_with_weight(&net, &state, l, w)
        })?;
        let rel_error = relative_error(&analytic, &numeric);
        checks.push(LayerCheck {
            quantity: Quantity::Weight,
            layer: l,
            rel_error,
            verdict: grade(rel_error),
        });
    }
    Ok(GradcheckReport {
        encoding: spec.encoding.to_string(),
        feedback: spec.feedback.to_string(),
        tolerance: config.tolerance,
        checks,
    })
}
