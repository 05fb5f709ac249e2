//! Predictive-coding network: state initialization, output clamping, error
//! computation, activity relaxation, weight-update directions and the three
//! feedback schemes.
//!
//! Levels are numbered from the input (level 0, clamped to the data) to the
//! output (level `L`, clamped to the target during training). `W_l` maps
//! level `l` to level `l+1`, so the prediction at level `l+1` is
//! `p_{l+1} = W_l a_l` and the effective prediction is `f(p_{l+1}) + b`.
//!
//! Errors travel back up through a feedback matrix: `W_l^T` for
//! [`FeedbackScheme::Transpose`], a fixed random `B_l` for
//! [`FeedbackScheme::RandomFixed`], or a `B_l` that receives the transposed
//! forward increment plus decay for [`FeedbackScheme::KolenPollack`].

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encodings::{predicted_rate, Bias, ErrorEncoding, ErrorSignal};
use crate::error::{Error, Result};
use crate::linalg::{activate_deriv, matmul, matmul_tn, outer_mean, ActivationKind, Matrix};

pub const DEFAULT_KP_GAMMA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedbackScheme {
    Transpose,
    RandomFixed,
    KolenPollack { gamma: f64 },
}

impl FeedbackScheme {
    pub fn validate(&self) -> Result<()> {
        if let FeedbackScheme::KolenPollack { gamma } = *self {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::Config(format!(
                    "Kolen-Pollack decay gamma must lie in (0, 1), got {gamma}"
                )));
            }
        }
        Ok(())
    }

    pub fn has_matrices(&self) -> bool {
        !matches!(self, FeedbackScheme::Transpose)
    }

    /// True when the feedback path is the exact transpose of the forward
    /// weights, i.e. activity updates are true gradients.
    pub fn is_exact(&self) -> bool {
        matches!(self, FeedbackScheme::Transpose)
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeedbackScheme::Transpose => "transpose",
            FeedbackScheme::RandomFixed => "random",
            FeedbackScheme::KolenPollack { .. } => "kp",
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            FeedbackScheme::Transpose => 0,
            FeedbackScheme::RandomFixed => 1,
            FeedbackScheme::KolenPollack { .. } => 2,
        }
    }
}

impl fmt::Display for FeedbackScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackScheme::KolenPollack { gamma } => write!(f, "kp(gamma={gamma})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Architecture and modelling choices shared by [`PcNetwork`] and the
/// backprop baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Layer widths, input first.
    pub dims: Vec<usize>,
    pub hidden_activation: ActivationKind,
    pub output_activation: ActivationKind,
    pub bias: Bias,
    pub encoding: ErrorEncoding,
    pub feedback: FeedbackScheme,
    /// Rectify activities after every state transition.
    pub positive_activities: bool,
    /// Apply the configured encoding at the clamped output level too. When
    /// false the output level always uses the plain subtractive error.
    pub encode_output: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            dims: vec![784, 300, 300, 10],
            hidden_activation: ActivationKind::Sigmoid,
            output_activation: ActivationKind::Sigmoid,
            bias: Bias::ZERO,
            encoding: ErrorEncoding::Subtractive,
            feedback: FeedbackScheme::Transpose,
            positive_activities: false,
            encode_output: true,
        }
    }
}

impl ModelSpec {
    pub fn with_dims(dims: &[usize]) -> Self {
        ModelSpec {
            dims: dims.to_vec(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 {
            return Err(Error::Config(format!(
                "need at least an input and an output layer, got dims {:?}",
                self.dims
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive: {:?}", self.dims)));
        }
        self.encoding.validate()?;
        self.feedback.validate()?;
        if self.encoding.is_division() && !self.positive_activities {
            return Err(Error::Config(
                "encoding=division requires positive_activities=true".into(),
            ));
        }
        Ok(())
    }

    /// Number of weight matrices, `L`.
    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn activation_at(&self, level: usize) -> ActivationKind {
        if level == self.depth() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn encoding_at(&self, level: usize) -> ErrorEncoding {
        if level == self.depth() && !self.encode_output {
            ErrorEncoding::Subtractive
        } else {
            self.encoding
        }
    }
}

/// Uniform Glorot initialization, `U(-sqrt(6/(fan_in+fan_out)), +sqrt(..))`.
pub fn glorot_uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..=limit))
}

/// Forward weights for `dims`, drawn in layer order from a ChaCha8 stream
/// seeded with `seed`. The baseline uses the same routine, so equal seeds
/// give equal starting weights.
pub(crate) fn init_forward_weights(dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<Matrix> {
    dims.windows(2)
        .map(|w| glorot_uniform(rng, w[1], w[0]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcNetwork {
    spec: ModelSpec,
    weights: Vec<Matrix>,
    feedback: Vec<Matrix>,
}

/// Activities, predictions and errors for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    activities: Vec<Matrix>,
    // index l-1 holds level l
    preacts: Vec<Matrix>,
    rates: Vec<Matrix>,
    errors: Vec<ErrorSignal>,
}

impl NetworkState {
    pub fn levels(&self) -> usize {
        self.preacts.len()
    }

    pub fn batch_size(&self) -> usize {
        self.activities[0].cols()
    }

    pub fn activity(&self, level: usize) -> &Matrix {
        &self.activities[level]
    }

    pub fn activities(&self) -> &[Matrix] {
        &self.activities
    }

    /// Overwrite a hidden activity. Call [`PcNetwork::refresh`] afterwards
    /// to bring predictions and errors up to date.
    pub fn set_activity(&mut self, level: usize, a: Matrix) -> Result<()> {
        let cur = &self.activities[level];
        if cur.shape() != a.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_activity",
                left: cur.shape(),
                right: a.shape(),
            });
        }
        self.activities[level] = a;
        Ok(())
    }

    /// Pre-activation prediction `p_l` for `l` in `1..=L`.
    pub fn prediction(&self, level: usize) -> &Matrix {
        &self.preacts[level - 1]
    }

    /// Effective prediction `f(p_l) + b` for `l` in `1..=L`.
    pub fn predicted_rate(&self, level: usize) -> &Matrix {
        &self.rates[level - 1]
    }

    /// Error signal at level `l` in `1..=L`.
    pub fn error(&self, level: usize) -> &ErrorSignal {
        &self.errors[level - 1]
    }
}

impl PcNetwork {
    /// Fresh network with Glorot-uniform forward weights and, for the
    /// random and Kolen-Pollack schemes, independently drawn feedback
    /// matrices from the same distribution. Deterministic in `seed`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = init_forward_weights(&spec.dims, &mut rng);
        let feedback = if spec.feedback.has_matrices() {
            spec.dims
                .windows(2)
                .map(|w| glorot_uniform(&mut rng, w[0], w[1]))
                .collect()
        } else {
            Vec::new()
        };
        Ok(PcNetwork {
            spec,
            weights,
            feedback,
        })
    }

    pub fn from_parts(spec: ModelSpec, weights: Vec<Matrix>, feedback: Vec<Matrix>) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.depth() {
            return Err(Error::Config(format!(
                "expected {} weight matrices, got {}",
                spec.depth(),
                weights.len()
            )));
        }
        for (l, w) in weights.iter().enumerate() {
            let want = (spec.dims[l + 1], spec.dims[l]);
            if w.shape() != want {
                return Err(Error::ShapeMismatch {
                    op: "weights",
                    left: want,
                    right: w.shape(),
                });
            }
        }
        let want_fb = if spec.feedback.has_matrices() { spec.depth() } else { 0 };
        if feedback.len() != want_fb {
            return Err(Error::Config(format!(
                "feedback scheme {} needs {want_fb} feedback matrices, got {}",
                spec.feedback,
                feedback.len()
            )));
        }
        for (l, b) in feedback.iter().enumerate() {
            let want = (spec.dims[l], spec.dims[l + 1]);
            if b.shape() != want {
                return Err(Error::ShapeMismatch {
                    op: "feedback weights",
                    left: want,
                    right: b.shape(),
                });
            }
        }
        Ok(PcNetwork {
            spec,
            weights,
            feedback,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dims(&self) -> &[usize] {
        &self.spec.dims
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    /// Separate feedback matrices `B_l` (empty under transpose feedback).
    pub fn feedback_weights(&self) -> &[Matrix] {
        &self.feedback
    }

    pub fn feedback_weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.feedback
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows() != self.spec.dims[0] {
            return Err(Error::ShapeMismatch {
                op: "input batch",
                left: (self.spec.dims[0], x.cols()),
                right: x.shape(),
            });
        }
        Ok(())
    }

    /// Feed-forward initialization: `a_0 = x`, then every higher level is
    /// set to its effective prediction so that all errors start at zero.
    /// With positive activities enabled the activities are rectified and
    /// the next prediction is taken from the rectified values.
    pub fn init_forward(&self, x: &Matrix) -> Result<NetworkState> {
        self.check_input(x)?;
        let depth = self.depth();
        let mut activities = Vec::with_capacity(depth + 1);
        let mut preacts = Vec::with_capacity(depth);
        let mut rates = Vec::with_capacity(depth);
        activities.push(x.clone());
        for l in 1..=depth {
            let p = matmul(&self.weights[l - 1], &activities[l - 1])?;
            let phat = predicted_rate(&p, self.spec.activation_at(l), self.spec.bias);
            let mut a = phat.clone();
            if self.spec.positive_activities {
                a.map_inplace(|v| v.max(0.0));
            }
            activities.push(a);
            preacts.push(p);
            rates.push(phat);
        }
        let mut state = NetworkState {
            activities,
            preacts,
            rates,
            errors: Vec::new(),
        };
        self.compute_errors(&mut state)?;
        Ok(state)
    }

    /// Clamp the top level to the target batch and refresh its error.
    pub fn clamp_output(&self, state: &mut NetworkState, y: &Matrix) -> Result<()> {
        let top = self.depth();
        let want = state.activities[top].shape();
        if y.shape() != want {
            return Err(Error::ShapeMismatch {
                op: "clamp_output",
                left: want,
                right: y.shape(),
            });
        }
        state.activities[top] = y.clone();
        state.errors[top - 1] = self.level_error(state, top)?;
        Ok(())
    }

    fn level_error(&self, state: &NetworkState, level: usize) -> Result<ErrorSignal> {
        ErrorSignal::compute(
            &self.spec.encoding_at(level),
            &state.activities[level],
            &state.rates[level - 1],
        )
        .map_err(|e| match e {
            Error::EncodingDomain { encoding, detail } => Error::EncodingDomain {
                encoding,
                detail: format!("level {level}: {detail}"),
            },
            other => other,
        })
    }

    /// Recompute the error neurons at every level from the current
    /// activities and predictions.
    pub fn compute_errors(&self, state: &mut NetworkState) -> Result<()> {
        state.errors = (1..=self.depth())
            .map(|l| self.level_error(state, l))
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Recompute predictions `p_l = W_{l-1} a_{l-1}` for every level, then
    /// the errors.
    pub fn refresh(&self, state: &mut NetworkState) -> Result<()> {
        self.refresh_from(state, 1)
    }

    fn refresh_from(&self, state: &mut NetworkState, first: usize) -> Result<()> {
        if state.levels() != self.depth() || state.activities[0].rows() != self.spec.dims[0] {
            return Err(Error::Config("state does not belong to this network".into()));
        }
        for l in first..=self.depth() {
            let p = matmul(&self.weights[l - 1], &state.activities[l - 1])?;
            state.rates[l - 1] = predicted_rate(&p, self.spec.activation_at(l), self.spec.bias);
            state.preacts[l - 1] = p;
        }
        self.compute_errors(state)
    }

    /// Sum over levels of each level's cost (squared error for the
    /// subtractive family, squared log-mismatch for division), averaged
    /// over the batch.
    pub fn objective(&self, state: &NetworkState) -> f64 {
        state.errors.iter().map(ErrorSignal::cost).sum()
    }

    fn bottom_up(&self, state: &NetworkState, level: usize) -> Result<Matrix> {
        let fprime = activate_deriv(self.spec.activation_at(level), &state.preacts[level - 1]);
        state.errors[level - 1].bottom_up(&fprime, &state.rates[level - 1])
    }

    fn feed_back(&self, layer: usize, delta: &Matrix) -> Result<Matrix> {
        if self.spec.feedback.has_matrices() {
            matmul(&self.feedback[layer], delta)
        } else {
            matmul_tn(&self.weights[layer], delta)
        }
    }

    /// Per-sample activity update directions for the hidden levels
    /// `1..L` (index `l-1` holds level `l`):
    /// `Fb_l * delta_{l+1} - dC_l/da_l`, where `delta_{l+1}` is the
    /// bottom-up error of the level above.
    pub fn activity_directions(&self, state: &NetworkState) -> Result<Vec<Matrix>> {
        let depth = self.depth();
        (1..depth)
            .map(|l| {
                let delta = self.bottom_up(state, l + 1)?;
                let fb = self.feed_back(l, &delta)?;
                let td = state.errors[l - 1].top_down(&state.activities[l])?;
                fb.sub(&td)
            })
            .collect()
    }

    /// One relaxation step on the hidden activities, `a_l += beta * da_l`,
    /// followed by rectification (when enabled) and a refresh of the
    /// predictions and errors. Input and output levels are untouched.
    pub fn activity_step(&self, state: &mut NetworkState, beta: f64) -> Result<()> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Config(format!("inference rate beta must lie in [0, 1), got {beta}")));
        }
        let dirs = self.activity_directions(state)?;
        for (l, d) in (1..).zip(&dirs) {
            let a = &mut state.activities[l];
            a.axpy(beta, d)?;
            if self.spec.positive_activities {
                a.map_inplace(|v| v.max(0.0));
            }
        }
        // p_1 depends only on the clamped input
        self.refresh_from(state, 2)
    }

    /// Weight-update directions `dW_l = mean_batch(delta_{l+1} a_l^T)`
    /// for `l` in `0..L`. Adding them to the weights descends the
    /// objective.
    pub fn weight_update_direction(&self, state: &NetworkState) -> Result<Vec<Matrix>> {
        (0..self.depth())
            .map(|l| {
                let delta = self.bottom_up(state, l + 1)?;
                outer_mean(&delta, &state.activities[l])
            })
            .collect()
    }

    /// Pure forward sweep, no relaxation and no rectification.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut a = x.clone();
        for (l, w) in (1..).zip(&self.weights) {
            let p = matmul(w, &a)?;
            a = predicted_rate(&p, self.spec.activation_at(l), self.spec.bias);
        }
        Ok(a)
    }

    /// Apply one increment per forward matrix. Under Kolen-Pollack
    /// feedback both matrices also decay and `B_l` receives `A_l^T`.
    pub fn apply_increments(&mut self, increments: &[Matrix]) -> Result<()> {
        if increments.len() != self.depth() {
            return Err(Error::Config(format!(
                "expected {} increments, got {}",
                self.depth(),
                increments.len()
            )));
        }
        match self.spec.feedback {
            FeedbackScheme::KolenPollack { gamma } => {
                for ((w, b), inc) in self.weights.iter_mut().zip(&mut self.feedback).zip(increments) {
                    kp_step_in_place(w, b, inc, gamma)?;
                }
            }
            _ => {
                for (w, inc) in self.weights.iter_mut().zip(increments) {
                    w.axpy(1.0, inc)?;
                }
            }
        }
        Ok(())
    }

    /// Cosine similarity between `vec(Fb_l)` and `vec(W_l^T)` per layer;
    /// identically 1 under transpose feedback.
    pub fn feedback_alignment(&self) -> Vec<f64> {
        if !self.spec.feedback.has_matrices() {
            return vec![1.0; self.depth()];
        }
        self.weights
            .iter()
            .zip(&self.feedback)
            .map(|(w, b)| cosine_similarity(&w.transpose(), b))
            .collect()
    }
}

pub fn cosine_similarity(a: &Matrix, b: &Matrix) -> f64 {
    let denom = a.frobenius_norm() * b.frobenius_norm();
    if denom == 0.0 {
        return 0.0;
    }
    a.dot(b).map_or(0.0, |d| d / denom)
}

/// Kolen-Pollack update: `W' = W + A - gamma W`, `B' = B + A^T - gamma B`.
pub fn kp_step(w: &Matrix, b: &Matrix, adjustment: &Matrix, gamma: f64) -> Result<(Matrix, Matrix)> {
    let (mut w, mut b) = (w.clone(), b.clone());
    kp_step_in_place(&mut w, &mut b, adjustment, gamma)?;
    Ok((w, b))
}

pub fn kp_step_in_place(w: &mut Matrix, b: &mut Matrix, adjustment: &Matrix, gamma: f64) -> Result<()> {
    if w.shape() != adjustment.shape() || b.shape() != (w.cols(), w.rows()) {
        return Err(Error::ShapeMismatch {
            op: "kp_step",
            left: w.shape(),
            right: if w.shape() != adjustment.shape() {
                adjustment.shape()
            } else {
                b.shape()
            },
        });
    }
    let keep = 1.0 - gamma;
    let cols = w.cols();
    let rows = w.rows();
    {
        let wd = w.data_mut();
        for (x, &a) in wd.iter_mut().zip(adjustment.data()) {
            *x = keep * *x + a;
        }
    }
    let bd = b.data_mut();
    let ad = adjustment.data();
    for i in 0..cols {
        for j in 0..rows {
            let x = &mut bd[i * rows + j];
            *x = keep * *x + ad[j * cols + i];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matmul;

    fn scalar(v: f64) -> Matrix {
        Matrix::filled(1, 1, v)
    }

    fn zero_net(dims: &[usize], feedback: FeedbackScheme) -> PcNetwork {
        let spec = ModelSpec {
            feedback,
            ..ModelSpec::with_dims(dims)
        };
        let weights = dims.windows(2).map(|w| Matrix::zeros(w[1], w[0])).collect();
        let fb = if feedback.has_matrices() {
            dims.windows(2).map(|w| Matrix::zeros(w[0], w[1])).collect()
        } else {
            vec![]
        };
        PcNetwork::from_parts(spec, weights, fb).unwrap()
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let a = PcNetwork::init(ModelSpec::default(), 3).unwrap();
        let b = PcNetwork::init(ModelSpec::default(), 3).unwrap();
        assert_eq!(a, b);
        let shapes: Vec<_> = a.weights().iter().map(Matrix::shape).collect();
        assert_eq!(shapes, vec![(300, 784), (300, 300), (10, 300)]);
        assert!(a.feedback_weights().is_empty());
        let c = PcNetwork::init(ModelSpec::default(), 4).unwrap();
        assert_ne!(a.weights()[0], c.weights()[0]);
        let limit = (6.0f64 / (784.0 + 300.0)).sqrt();
        assert!(a.weights()[0].max_abs() <= limit);
    }

    #[test]
    fn init_rejects_bad_specs() {
        assert!(PcNetwork::init(ModelSpec::with_dims(&[]), 0).is_err());
        assert!(PcNetwork::init(ModelSpec::with_dims(&[4]), 0).is_err());
        let div = ModelSpec {
            encoding: ErrorEncoding::division(),
            ..ModelSpec::with_dims(&[3, 2])
        };
        assert!(PcNetwork::init(div, 0).is_err());
        let kp = ModelSpec {
            feedback: FeedbackScheme::KolenPollack { gamma: 1.5 },
            ..ModelSpec::with_dims(&[3, 2])
        };
        assert!(PcNetwork::init(kp, 0).is_err());
    }

    #[test]
    fn kp_feedback_starts_unaligned() {
        let spec = ModelSpec {
            feedback: FeedbackScheme::KolenPollack { gamma: 0.01 },
            ..ModelSpec::with_dims(&[400, 300])
        };
        let net = PcNetwork::init(spec, 11).unwrap();
        let cos = net.feedback_alignment()[0];
        // independent draws: roughly orthogonal, |cos| ~ 1/sqrt(120000)
        assert!(cos.abs() < 0.02, "cos = {cos}");
    }

    #[test]
    fn forward_weights_do_not_depend_on_feedback_scheme() {
        let base = PcNetwork::init(ModelSpec::with_dims(&[6, 5, 3]), 9).unwrap();
        let rand = PcNetwork::init(
            ModelSpec {
                feedback: FeedbackScheme::RandomFixed,
                ..ModelSpec::with_dims(&[6, 5, 3])
            },
            9,
        )
        .unwrap();
        assert_eq!(base.weights(), rand.weights());
        assert_eq!(rand.feedback_weights()[1].shape(), (5, 3));
    }

    #[test]
    fn init_forward_examples() {
        let net = zero_net(&[3, 4, 2], FeedbackScheme::Transpose);
        let x = Matrix::from_fn(3, 2, |r, c| (r + c) as f64);
        let st = net.init_forward(&x).unwrap();
        assert_eq!(st.activity(1), &Matrix::filled(4, 2, 0.5));
        assert_eq!(st.activity(0), &x);
        for l in 1..=2 {
            assert_eq!(st.error(l).signed().unwrap(), &Matrix::zeros(st.activity(l).rows(), 2));
        }
        let chain = zero_net(&[1, 1, 1], FeedbackScheme::Transpose);
        let st = chain.init_forward(&scalar(1.0)).unwrap();
        assert_eq!(st.prediction(1).get(0, 0), 0.0);
        assert_eq!(st.activity(1).get(0, 0), 0.5);
        assert_eq!(st.activity(2).get(0, 0), 0.5);
        assert!(net.init_forward(&Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn hidden_errors_start_at_zero_with_bias() {
        let spec = ModelSpec {
            bias: Bias::new(0.3).unwrap(),
            hidden_activation: ActivationKind::Tanh,
            ..ModelSpec::with_dims(&[5, 4, 3])
        };
        let net = PcNetwork::init(spec, 1).unwrap();
        let x = Matrix::from_fn(5, 3, |r, c| ((r * 3 + c) as f64 * 0.37).sin());
        let st = net.init_forward(&x).unwrap();
        assert!(net.objective(&st) == 0.0);
    }

    #[test]
    fn clamp_examples() {
        let net = zero_net(&[2, 3, 2], FeedbackScheme::Transpose);
        let mut st = net.init_forward(&Matrix::ones(2, 2)).unwrap();
        let y = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        net.clamp_output(&mut st, &y).unwrap();
        assert_eq!(st.activity(2), &y);
        let e = st.error(2).signed().unwrap();
        assert_eq!(e, &Matrix::from_rows(&[&[0.5, -0.5], &[-0.5, 0.5]]).unwrap());

        let mut st = net.init_forward(&Matrix::ones(2, 2)).unwrap();
        net.clamp_output(&mut st, &Matrix::filled(2, 2, 0.5)).unwrap();
        assert_eq!(st.error(2).signed().unwrap(), &Matrix::zeros(2, 2));
        assert!(net.clamp_output(&mut st, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn compute_errors_at_equilibrium_per_encoding() {
        let x = Matrix::from_fn(3, 2, |r, c| 0.2 * (r + c) as f64);
        for (enc, positive, expect) in [
            (ErrorEncoding::Subtractive, false, 0.0),
            (ErrorEncoding::threshold_for_bias(Bias::ZERO), false, 2.0 / 2.1),
            (ErrorEncoding::division(), true, 1.0),
        ] {
            let spec = ModelSpec {
                encoding: enc,
                positive_activities: positive,
                ..ModelSpec::with_dims(&[3, 4, 2])
            };
            let net = PcNetwork::init(spec, 5).unwrap();
            let mut st = net.init_forward(&x).unwrap();
            net.compute_errors(&mut st).unwrap();
            for l in 1..=2 {
                let r = st.error(l).rates();
                assert_eq!(r.shape(), st.activity(l).shape());
                assert!(r.data().iter().all(|v| (v - expect).abs() < 1e-12), "{enc}");
            }
        }
    }

    #[test]
    fn activity_step_examples() {
        let net = PcNetwork::init(ModelSpec::with_dims(&[4, 5, 3]), 2).unwrap();
        let x = Matrix::from_fn(4, 2, |r, c| 0.1 * (r + 2 * c) as f64);
        let y = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let mut st = net.init_forward(&x).unwrap();
        net.clamp_output(&mut st, &y).unwrap();
        let before = st.clone();
        net.activity_step(&mut st, 0.0).unwrap();
        assert_eq!(st, before);

        // hidden errors are zero: the direction is exactly the feedback term
        let dirs = net.activity_directions(&st).unwrap();
        let e2 = st.error(2).signed().unwrap();
        let fp = activate_deriv(ActivationKind::Sigmoid, st.prediction(2));
        let expect = matmul(&net.weights()[1].transpose(), &e2.zip_map(&fp, "t", |a, b| a * b).unwrap()).unwrap();
        assert_eq!(dirs[0], expect);

        assert!(net.activity_step(&mut st, 1.0).is_err());
        assert!(net.activity_step(&mut st, -0.1).is_err());
    }

    #[test]
    fn scalar_chain_hand_values() {
        let net = zero_net(&[1, 1, 1], FeedbackScheme::Transpose);
        let mut st = net.init_forward(&scalar(1.0)).unwrap();
        net.clamp_output(&mut st, &scalar(1.0)).unwrap();
        assert_eq!(st.error(2).signed().unwrap().get(0, 0), 0.5);
        // W_1 = 0 so the feedback term vanishes and e_1 = 0
        assert_eq!(net.activity_directions(&st).unwrap()[0].get(0, 0), 0.0);

        let single = zero_net(&[1, 1], FeedbackScheme::Transpose);
        let mut st = single.init_forward(&scalar(1.0)).unwrap();
        single.clamp_output(&mut st, &scalar(1.0)).unwrap();
        let dw = single.weight_update_direction(&st).unwrap();
        assert_eq!(dw[0].get(0, 0), 0.125);
    }

    #[test]
    fn zero_errors_give_zero_weight_directions() {
        let net = PcNetwork::init(ModelSpec::with_dims(&[3, 4, 2]), 8).unwrap();
        let st = net.init_forward(&Matrix::ones(3, 5)).unwrap();
        for dw in net.weight_update_direction(&st).unwrap() {
            assert_eq!(dw.max_abs(), 0.0);
        }
    }

    #[test]
    fn positive_init_rectifies() {
        let spec = ModelSpec {
            hidden_activation: ActivationKind::Tanh,
            positive_activities: true,
            ..ModelSpec::with_dims(&[4, 6, 2])
        };
        let net = PcNetwork::init(spec, 3).unwrap();
        let x = Matrix::from_fn(4, 3, |r, c| if (r + c) % 2 == 0 { 1.0 } else { 0.0 });
        let st = net.init_forward(&x).unwrap();
        assert!(st.activities().iter().all(|a| a.data().iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn kp_step_examples() {
        let w = Matrix::from_rows(&[&[1.0, -2.0, 0.5], &[0.0, 3.0, 1.0]]).unwrap();
        let b = Matrix::from_fn(3, 2, |r, c| (r as f64) - (c as f64));
        let (w2, b2) = kp_step(&w, &b, &Matrix::zeros(2, 3), 0.1).unwrap();
        assert_eq!(w2, w.scale(0.9));
        assert_eq!(b2, b.scale(0.9));

        let a = Matrix::from_fn(2, 3, |r, c| 0.01 * (r as f64 + 1.0) * (c as f64 - 1.0));
        let (w3, b3) = kp_step(&w, &w.transpose(), &a, 0.05).unwrap();
        assert_eq!(b3, w3.transpose());

        assert!(kp_step(&w, &b, &Matrix::zeros(3, 2), 0.1).is_err());
        assert!(kp_step(&w, &w, &Matrix::zeros(2, 3), 0.1).is_err());
    }

    #[test]
    fn kp_alignment_error_decays() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut w = glorot_uniform(&mut rng, 8, 6);
        let mut b = glorot_uniform(&mut rng, 6, 8);
        let gamma = 0.01;
        let mut prev = b.sub(&w.transpose()).unwrap().frobenius_norm();
        for _ in 0..1000 {
            let a = Matrix::from_fn(8, 6, |_, _| rng.gen_range(-0.05..0.05));
            kp_step_in_place(&mut w, &mut b, &a, gamma).unwrap();
            let gap = b.sub(&w.transpose()).unwrap().frobenius_norm();
            assert!(gap <= prev + 1e-15);
            prev = gap;
        }
        assert!(prev < 1e-3 * w.frobenius_norm(), "gap {prev} vs |W| {}", w.frobenius_norm());
    }

    #[test]
    fn predict_examples() {
        let zero = zero_net(&[3, 4, 2], FeedbackScheme::Transpose);
        assert_eq!(zero.predict(&Matrix::ones(3, 4)).unwrap(), Matrix::filled(2, 4, 0.5));
        let net = PcNetwork::init(ModelSpec::with_dims(&[3, 4, 2]), 12).unwrap();
        let x = Matrix::from_fn(3, 4, |r, c| (r as f64 * 0.3) - (c as f64 * 0.1));
        let out = net.predict(&x).unwrap();
        assert_eq!(out, net.predict(&x).unwrap());
        assert_eq!(&out, net.init_forward(&x).unwrap().activity(2));
        assert!(net.predict(&Matrix::ones(4, 1)).is_err());
    }

    #[test]
    fn apply_increments_kp_moves_feedback() {
        let spec = ModelSpec {
            feedback: FeedbackScheme::KolenPollack { gamma: 0.5 },
            ..ModelSpec::with_dims(&[2, 2])
        };
        let mut net = PcNetwork::init(spec, 1).unwrap();
        let w0 = net.weights()[0].clone();
        let b0 = net.feedback_weights()[0].clone();
        let inc = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        net.apply_increments(std::slice::from_ref(&inc)).unwrap();
        assert_eq!(net.weights()[0], w0.scale(0.5).add(&inc).unwrap());
        assert_eq!(net.feedback_weights()[0], b0.scale(0.5).add(&inc.transpose()).unwrap());
        assert!(net.apply_increments(&[]).is_err());
    }
}
