//! Training configuration.
//!
//! Values come from three layers, highest priority first: command-line
//! flags, a plain-text config file of `key = value` lines, and built-in
//! defaults. Keys are the snake_case field names; kebab-case is accepted
//! too so file keys can mirror the `--flag` spelling.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::encodings::{Bias, ErrorEncoding, DEFAULT_EPSILON, DEFAULT_E_MAX, DEFAULT_E_MIN};
use crate::error::{Error, Result};
use crate::linalg::ActivationKind;
use crate::network::{FeedbackScheme, ModelSpec, DEFAULT_KP_GAMMA};
use crate::optim::OptimizerKind;

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn name(self) -> &'static str {
                match self { $($name::$variant => $s),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($s => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " '{}' (expected one of: {})"),
                        other,
                        [$($s),+].join(", ")
                    ))),
                }
            }
        }
    };
}

named_enum!(DatasetKind { Mnist => "mnist", Fashion => "fashion" });
named_enum!(ModelKind { Pc => "pc", Bp => "bp" });
named_enum!(FeedbackKind { Transpose => "transpose", Random => "random", Kp => "kp" });
named_enum!(EncodingKind { Subtractive => "subtractive", Threshold => "threshold", Division => "division" });

/// Every recognised configuration key.
pub const KEYS: &[&str] = &[
    "dataset",
    "data_dir",
    "model",
    "feedback",
    "encoding",
    "hidden_activation",
    "positive_activities",
    "bias",
    "epochs",
    "batch_size",
    "lr",
    "beta",
    "n_updates",
    "gamma",
    "epsilon",
    "e_min",
    "e_max",
    "seed",
    "out_dir",
    "hidden_dims",
    "optimizer",
    "encode_output",
    "train_limit",
    "test_limit",
    "wall_time",
];

/// Unresolved `key -> value` settings from one source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig(BTreeMap<String, String>);

fn normalize_key(key: &str) -> Result<String> {
    let k = key.trim().replace('-', "_");
    if KEYS.contains(&k.as_str()) {
        Ok(k)
    } else {
        Err(Error::Config(format!("unknown configuration key '{}'", key.trim())))
    }
}

impl RawConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        self.0.insert(normalize_key(key)?, value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Parse `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            raw.set(k, v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(raw)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Entries of `higher` replace entries of `self`.
    pub fn overlay(mut self, higher: &RawConfig) -> Self {
        for (k, v) in &higher.0 {
            self.0.insert(k.clone(), v.clone());
        }
        self
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("{key} = '{v}': {e}")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(Error::Config(format!("{key} = '{v}': expected true or false"))),
            })
            .transpose()
    }
}

/// A fully resolved and validated training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    pub model: ModelKind,
    pub feedback: FeedbackKind,
    pub encoding: EncodingKind,
    pub hidden_activation: ActivationKind,
    pub positive_activities: bool,
    pub bias: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta: f64,
    pub n_updates: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub hidden_dims: Vec<usize>,
    pub optimizer: OptimizerKind,
    pub encode_output: bool,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::resolve(&RawConfig::new()).expect("built-in defaults are valid")
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer '{other}' (expected adam or sgd)"))),
        }
    }
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|d| {
            d.trim()
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::Config(format!("hidden_dims: bad width '{}'", d.trim())))
        })
        .collect()
}

impl TrainConfig {
    /// Defaults for a dataset: inference rate 0.1 with 20 relaxation steps
    /// on MNIST, 0.025 with 7 on Fashion-MNIST.
    pub fn relaxation_defaults(dataset: DatasetKind) -> (f64, usize) {
        match dataset {
            DatasetKind::Mnist => (0.1, 20),
            DatasetKind::Fashion => (0.025, 7),
        }
    }

    pub fn resolve(raw: &RawConfig) -> Result<Self> {
        let dataset = raw.parsed("dataset")?.unwrap_or(DatasetKind::Mnist);
        let (beta_default, n_default) = Self::relaxation_defaults(dataset);
        let encoding: EncodingKind = raw.parsed("encoding")?.unwrap_or(EncodingKind::Subtractive);
        let positive_activities = match (encoding, raw.flag("positive_activities")?) {
            (EncodingKind::Division, Some(false)) => {
                return Err(Error::Config(
                    "encoding=division requires positive_activities=true, but positive_activities=false was given"
                        .into(),
                ))
            }
            (EncodingKind::Division, _) => true,
            (_, explicit) => explicit.unwrap_or(false),
        };
        let bias: f64 = raw.parsed("bias")?.unwrap_or(0.0);
        let cfg = TrainConfig {
            dataset,
            data_dir: raw
                .get("data_dir")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(format!("data/{}", dataset.name()))),
            model: raw.parsed("model")?.unwrap_or(ModelKind::Pc),
            feedback: raw.parsed("feedback")?.unwrap_or(FeedbackKind::Transpose),
            encoding,
            hidden_activation: raw.parsed("hidden_activation")?.unwrap_or(ActivationKind::Sigmoid),
            positive_activities,
            bias,
            epochs: raw.parsed("epochs")?.unwrap_or(25),
            batch_size: raw.parsed("batch_size")?.unwrap_or(64),
            lr: raw.parsed("lr")?.unwrap_or(1e-3),
            beta: raw.parsed("beta")?.unwrap_or(beta_default),
            n_updates: raw.parsed("n_updates")?.unwrap_or(n_default),
            gamma: raw.parsed("gamma")?.unwrap_or(DEFAULT_KP_GAMMA),
            epsilon: raw.parsed("epsilon")?.unwrap_or(DEFAULT_EPSILON),
            e_min: raw.parsed("e_min")?.unwrap_or(DEFAULT_E_MIN - bias),
            e_max: raw.parsed("e_max")?.unwrap_or(DEFAULT_E_MAX),
            seed: raw.parsed("seed")?.unwrap_or(0),
            out_dir: raw.get("out_dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out")),
            hidden_dims: raw.get("hidden_dims").map(parse_dims).transpose()?.unwrap_or(vec![300, 300]),
            optimizer: raw.parsed("optimizer")?.unwrap_or(OptimizerKind::Adam),
            encode_output: raw.flag("encode_output")?.unwrap_or(true),
            train_limit: raw.parsed("train_limit")?,
            test_limit: raw.parsed("test_limit")?,
            wall_time: raw.flag("wall_time")?.unwrap_or(true),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return fail(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.train_limit == Some(0) || self.test_limit == Some(0) {
            return fail("train_limit and test_limit must be positive when given".into());
        }
        if self.encoding == EncodingKind::Division && !self.positive_activities {
            return fail("encoding=division requires positive_activities=true".into());
        }
        self.model_spec().map(|_| ())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![crate::dataio::IMAGE_SIDE * crate::dataio::IMAGE_SIDE];
        d.extend(&self.hidden_dims);
        d.push(crate::dataio::NUM_CLASSES);
        d
    }

    pub fn error_encoding(&self) -> ErrorEncoding {
        match self.encoding {
            EncodingKind::Subtractive => ErrorEncoding::Subtractive,
            EncodingKind::Threshold => ErrorEncoding::SubtractiveThreshold {
                e_min: self.e_min,
                e_max: self.e_max,
            },
            EncodingKind::Division => ErrorEncoding::Division { epsilon: self.epsilon },
        }
    }

    pub fn feedback_scheme(&self) -> FeedbackScheme {
        match self.feedback {
            FeedbackKind::Transpose => FeedbackScheme::Transpose,
            FeedbackKind::Random => FeedbackScheme::RandomFixed,
            FeedbackKind::Kp => FeedbackScheme::KolenPollack { gamma: self.gamma },
        }
    }

    /// Output units are always sigmoid; hidden units use the configured kind.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec = ModelSpec {
            dims: self.dims(),
            hidden_activation: self.hidden_activation,
            output_activation: ActivationKind::Sigmoid,
            bias: Bias::new(self.bias)?,
            encoding: self.error_encoding(),
            feedback: self.feedback_scheme(),
            positive_activities: self.positive_activities,
            encode_output: self.encode_output,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Render as a config file that resolves back to this configuration.
    pub fn to_config_text(&self) -> String {
        let opt = |v: Option<usize>| v.map(|n| n.to_string());
        let dims: Vec<String> = self.hidden_dims.iter().map(ToString::to_string).collect();
        let entries: Vec<(&str, Option<String>)> = vec![
            ("dataset", Some(self.dataset.to_string())),
            ("data_dir", Some(self.data_dir.display().to_string())),
            ("model", Some(self.model.to_string())),
            ("feedback", Some(self.feedback.to_string())),
            ("encoding", Some(self.encoding.to_string())),
            ("hidden_activation", Some(self.hidden_activation.to_string())),
            ("positive_activities", Some(self.positive_activities.to_string())),
            ("bias", Some(self.bias.to_string())),
            ("epochs", Some(self.epochs.to_string())),
            ("batch_size", Some(self.batch_size.to_string())),
            ("lr", Some(self.lr.to_string())),
            ("beta", Some(self.beta.to_string())),
            ("n_updates", Some(self.n_updates.to_string())),
            ("gamma", Some(self.gamma.to_string())),
            ("epsilon", Some(self.epsilon.to_string())),
            ("e_min", Some(self.e_min.to_string())),
            ("e_max", Some(self.e_max.to_string())),
            ("seed", Some(self.seed.to_string())),
            ("out_dir", Some(self.out_dir.display().to_string())),
            ("hidden_dims", Some(dims.join(","))),
            ("optimizer", Some(self.optimizer.name().to_string())),
            ("encode_output", Some(self.encode_output.to_string())),
            ("train_limit", opt(self.train_limit)),
            ("test_limit", opt(self.test_limit)),
            ("wall_time", Some(self.wall_time.to_string())),
        ];
        entries
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| format!("{k} = {v}\n")))
            .collect()
    }
}
