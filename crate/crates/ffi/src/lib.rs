//! C ABI over the `pcnet` library.
//!
//! Every fallible call returns a [`PcnetStatus`]. On failure a description
//! is available from [`pcnet_last_error_message`] on the same thread until
//! the next failing call. Handles are opaque; free them with the matching
//! `_free` function.
//!
//! Batches cross the boundary sample-major: `batch` rows of `width`
//! contiguous doubles.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pcnet::gradcheck::{gradcheck, GradcheckConfig};
use pcnet::train::Relaxation;
use pcnet::{
    ActivationKind, AdamConfig, Bias, Checkpoint, Error, ErrorEncoding, FeedbackScheme, Learner, Matrix, Mlp, Model,
    ModelSpec, OptimizerKind, OptimizerSet, PcNetwork,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    EncodingDomain = 4,
    Io = 5,
    Checkpoint = 6,
    GradcheckFailed = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcnetModelKind {
    Pc = 0,
    Bp = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcnetActivation {
    Sigmoid = 0,
    Tanh = 1,
    Relu = 2,
    Identity = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcnetEncoding {
    Subtractive = 0,
    Threshold = 1,
    Division = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcnetFeedback {
    Transpose = 0,
    Random = 1,
    KolenPollack = 2,
}

/// Model and training settings. Fill with [`pcnet_config_default`] and
/// override fields as needed. `dims` points at `n_dims` layer widths,
/// input first; it is only read during the call that receives the config.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PcnetConfig {
    pub dims: *const usize,
    pub n_dims: usize,
    pub model: PcnetModelKind,
    pub hidden_activation: PcnetActivation,
    pub encoding: PcnetEncoding,
    pub feedback: PcnetFeedback,
    pub positive_activities: bool,
    pub encode_output: bool,
    pub bias: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub lr: f64,
    pub beta: f64,
    pub n_updates: u32,
    pub seed: u64,
}

/// A model with its optimizer state and relaxation settings.
pub struct PcnetLearner {
    inner: Learner,
}

static DEFAULT_DIMS: [usize; 4] = [784, 300, 300, 10];

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> PcnetStatus {
    match e {
        Error::ShapeMismatch { .. } | Error::NotVector { .. } => PcnetStatus::ShapeMismatch,
        Error::EncodingDomain { .. } => PcnetStatus::EncodingDomain,
        Error::Checkpoint(_) => PcnetStatus::Checkpoint,
        Error::Io { .. } | Error::Idx { .. } | Error::IdxFormat(_) | Error::Dataset(_) => PcnetStatus::Io,
        Error::Config(_) | Error::InvalidMatrix(_) => PcnetStatus::InvalidArgument,
    }
}

fn fail(status: PcnetStatus, msg: impl Into<String>) -> PcnetStatus {
    set_error(msg);
    status
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), PcnetStatus>) -> PcnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PcnetStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(PcnetStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: pcnet::Result<T>) -> Result<T, PcnetStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), PcnetStatus> {
    if p.is_null() {
        Err(fail(PcnetStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

impl PcnetActivation {
    fn kind(self) -> ActivationKind {
        match self {
            PcnetActivation::Sigmoid => ActivationKind::Sigmoid,
            PcnetActivation::Tanh => ActivationKind::Tanh,
            PcnetActivation::Relu => ActivationKind::Relu,
            PcnetActivation::Identity => ActivationKind::Identity,
        }
    }
}

impl PcnetConfig {
    unsafe fn spec(&self) -> Result<ModelSpec, PcnetStatus> {
        non_null(self.dims, "config.dims")?;
        let dims = std::slice::from_raw_parts(self.dims, self.n_dims).to_vec();
        let encoding = match self.encoding {
            PcnetEncoding::Subtractive => ErrorEncoding::Subtractive,
            PcnetEncoding::Threshold => ErrorEncoding::SubtractiveThreshold {
                e_min: self.e_min,
                e_max: self.e_max,
            },
            PcnetEncoding::Division => ErrorEncoding::Division { epsilon: self.epsilon },
        };
        let feedback = match self.feedback {
            PcnetFeedback::Transpose => FeedbackScheme::Transpose,
            PcnetFeedback::Random => FeedbackScheme::RandomFixed,
            PcnetFeedback::KolenPollack => FeedbackScheme::KolenPollack { gamma: self.gamma },
        };
        let spec = ModelSpec {
            dims,
            hidden_activation: self.hidden_activation.kind(),
            output_activation: ActivationKind::Sigmoid,
            bias: lift(Bias::new(self.bias))?,
            encoding,
            feedback,
            positive_activities: self.positive_activities,
            encode_output: self.encode_output,
        };
        lift(spec.validate())?;
        Ok(spec)
    }

    fn relaxation(&self) -> Result<Relaxation, PcnetStatus> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(fail(
                PcnetStatus::InvalidArgument,
                format!("beta must lie in [0, 1), got {}", self.beta),
            ));
        }
        Ok(Relaxation {
            beta: self.beta,
            n_updates: self.n_updates as usize,
        })
    }
}

/// Write the default configuration (784-300-300-10 predictive-coding
/// network, sigmoid, subtractive errors, transpose feedback, lr 0.001,
/// beta 0.1, 20 activity steps) into `out`.
#[no_mangle]
pub unsafe extern "C" fn pcnet_config_default(out: *mut PcnetConfig) -> PcnetStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = PcnetConfig {
            dims: DEFAULT_DIMS.as_ptr(),
            n_dims: DEFAULT_DIMS.len(),
            model: PcnetModelKind::Pc,
            hidden_activation: PcnetActivation::Sigmoid,
            encoding: PcnetEncoding::Subtractive,
            feedback: PcnetFeedback::Transpose,
            positive_activities: false,
            encode_output: true,
            bias: 0.0,
            gamma: pcnet::network::DEFAULT_KP_GAMMA,
            epsilon: pcnet::encodings::DEFAULT_EPSILON,
            e_min: pcnet::encodings::DEFAULT_E_MIN,
            e_max: pcnet::encodings::DEFAULT_E_MAX,
            lr: 1e-3,
            beta: 0.1,
            n_updates: 20,
            seed: 0,
        };
        Ok(())
    })
}

/// Create a freshly initialized learner. On success `*out` owns a handle
/// to release with [`pcnet_learner_free`].
#[no_mangle]
pub unsafe extern "C" fn pcnet_learner_new(config: *const PcnetConfig, out: *mut *mut PcnetLearner) -> PcnetStatus {
    guard(|| {
        non_null(config, "config")?;
        non_null(out, "out")?;
        let cfg = &*config;
        let spec = cfg.spec()?;
        let relaxation = cfg.relaxation()?;
        let adam = AdamConfig::with_lr(cfg.lr);
        lift(adam.validate())?;
        let model = match cfg.model {
            PcnetModelKind::Pc => Model::Pc(lift(PcNetwork::init(spec, cfg.seed))?),
            PcnetModelKind::Bp => Model::Mlp(lift(Mlp::init(
                &spec.dims,
                spec.hidden_activation,
                spec.output_activation,
                spec.bias,
                cfg.seed,
            ))?),
        };
        let optimizer = OptimizerSet::new(OptimizerKind::Adam, adam, model.weights());
        let learner = Learner::new(model, optimizer, relaxation);
        *out = Box::into_raw(Box::new(PcnetLearner { inner: learner }));
        Ok(())
    })
}

/// Release a learner. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pcnet_learner_free(learner: *mut PcnetLearner) {
    if !learner.is_null() {
        drop(Box::from_raw(learner));
    }
}

/// Width of the input layer, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn pcnet_learner_input_dim(learner: *const PcnetLearner) -> usize {
    learner.as_ref().map_or(0, |l| l.inner.model.dims()[0])
}

/// Width of the output layer, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn pcnet_learner_output_dim(learner: *const PcnetLearner) -> usize {
    learner
        .as_ref()
        .map_or(0, |l| *l.inner.model.dims().last().expect("dims"))
}

/// Sample-major buffer -> features x batch matrix.
unsafe fn read_batch(data: *const f64, batch: usize, width: usize, what: &str) -> Result<Matrix, PcnetStatus> {
    non_null(data, what)?;
    if batch == 0 {
        return Err(fail(PcnetStatus::InvalidArgument, "batch must be at least 1"));
    }
    let rows = std::slice::from_raw_parts(data, batch * width);
    Ok(Matrix::from_fn(width, batch, |r, c| rows[c * width + r]))
}

/// One minibatch: relaxation (predictive coding) or backprop, then an Adam
/// step. `x` holds `batch` inputs, `y` the matching targets. If
/// `objective` is non-null it receives the batch objective.
#[no_mangle]
pub unsafe extern "C" fn pcnet_learner_train_batch(
    learner: *mut PcnetLearner,
    x: *const f64,
    y: *const f64,
    batch: usize,
    objective: *mut f64,
) -> PcnetStatus {
    guard(|| {
        non_null(learner, "learner")?;
        let l = &mut (*learner).inner;
        let dims = l.model.dims().to_vec();
        let xm = read_batch(x, batch, dims[0], "x")?;
        let ym = read_batch(y, batch, *dims.last().expect("dims"), "y")?;
        let stats = lift(l.train_batch(&xm, &ym))?;
        if !objective.is_null() {
            *objective = stats.objective;
        }
        Ok(())
    })
}

/// Pure forward sweep. `out` must hold `batch * output_dim` doubles and is
/// filled sample-major.
#[no_mangle]
pub unsafe extern "C" fn pcnet_learner_predict(
    learner: *const PcnetLearner,
    x: *const f64,
    batch: usize,
    out: *mut f64,
) -> PcnetStatus {
    guard(|| {
        non_null(learner, "learner")?;
        non_null(out, "out")?;
        let l = &(*learner).inner;
        let xm = read_batch(x, batch, l.model.dims()[0], "x")?;
        let pred = lift(l.model.predict(&xm))?;
        let width = pred.rows();
        let dst = std::slice::from_raw_parts_mut(out, batch * width);
        for c in 0..batch {
            for r in 0..width {
                dst[c * width + r] = pred.get(r, c);
            }
        }
        Ok(())
    })
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, PcnetStatus> {
    non_null(path, "path")?;
    CStr::from_ptr(path)
        .to_str()
        .map_err(|_| fail(PcnetStatus::InvalidArgument, "path is not valid UTF-8"))
}

/// Save the model and optimizer state to a checkpoint file.
#[no_mangle]
pub unsafe extern "C" fn pcnet_learner_save(learner: *const PcnetLearner, path: *const c_char, epoch: u32) -> PcnetStatus {
    guard(|| {
        non_null(learner, "learner")?;
        let path = path_arg(path)?;
        let l = &(*learner).inner;
        let ck = Checkpoint::new(epoch, l.model.clone(), Some(l.optimizer.clone()));
        lift(ck.save(path))
    })
}

/// Load a checkpoint into a new learner. The relaxation settings are not
/// part of the file and are given here. A checkpoint without optimizer
/// state resumes with fresh Adam moments at `lr` 0.001.
#[no_mangle]
pub unsafe extern "C" fn pcnet_learner_load(
    path: *const c_char,
    beta: f64,
    n_updates: u32,
    out: *mut *mut PcnetLearner,
) -> PcnetStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path)?;
        if !(0.0..1.0).contains(&beta) {
            return Err(fail(PcnetStatus::InvalidArgument, format!("beta must lie in [0, 1), got {beta}")));
        }
        let ck = lift(Checkpoint::load(path))?;
        let optimizer = ck
            .optimizer
            .unwrap_or_else(|| OptimizerSet::new(OptimizerKind::Adam, AdamConfig::default(), ck.model.weights()));
        let learner = Learner::new(
            ck.model,
            optimizer,
            Relaxation {
                beta,
                n_updates: n_updates as usize,
            },
        );
        *out = Box::into_raw(Box::new(PcnetLearner { inner: learner }));
        Ok(())
    })
}

/// Finite-difference check on a `[5, 4, 3]` network with the modelling
/// choices of `config` (its dims are ignored). Writes the largest relative
/// error among gradient-exact checks to `max_rel_error` when non-null and
/// returns `PCNET_STATUS_GRADCHECK_FAILED` if any exceeds 1e-4.
#[no_mangle]
pub unsafe extern "C" fn pcnet_gradcheck(config: *const PcnetConfig, max_rel_error: *mut f64) -> PcnetStatus {
    guard(|| {
        non_null(config, "config")?;
        let cfg = *config;
        let small = [5usize, 4, 3];
        let with_small = PcnetConfig {
            dims: small.as_ptr(),
            n_dims: small.len(),
            ..cfg
        };
        let spec = with_small.spec()?;
        let report = lift(gradcheck(&GradcheckConfig::small(&spec, cfg.seed)))?;
        if !max_rel_error.is_null() {
            *max_rel_error = report.max_rel_error();
        }
        if report.passed() {
            Ok(())
        } else {
            Err(fail(PcnetStatus::GradcheckFailed, report.to_string()))
        }
    })
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pcnet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
