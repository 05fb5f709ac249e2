//! Predictive-coding networks with biologically constrained variants:
//! separate or learned feedback weights, positive activities, a firing-rate
//! offset, and non-negative error encodings (threshold-shifted and
//! division-based). Includes an exact-backprop baseline, IDX dataset
//! loading, training loop, checkpoints and a finite-difference gradient
//! checker.

pub mod baseline;
pub mod checkpoint;
pub mod config;
pub mod dataio;
pub mod encodings;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod network;
pub mod optim;
pub mod train;

pub use baseline::Mlp;
pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use encodings::{Bias, ErrorEncoding, ErrorSignal};
pub use error::{Error, IdxError, Result};
pub use linalg::{ActivationKind, Matrix};
pub use network::{FeedbackScheme, ModelSpec, NetworkState, PcNetwork};
pub use optim::{AdamConfig, AdamState, OptimizerKind, OptimizerSet};
pub use train::{Learner, Model};
