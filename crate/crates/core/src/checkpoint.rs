//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "PCCK"  u32 version  u8 model kind (0 pc, 1 bp)  u32 epoch
//! u32 L   (L+1) x u32 dims
//! u8 hidden activation  u8 output activation
//! u8 encoding [+ f64 e_min, f64 e_max | f64 epsilon]
//! u8 feedback [+ f64 gamma]
//! u8 positive_activities  u8 encode_output  f64 bias
//! L x matrix W, then L x matrix B when the feedback scheme stores them
//! u8 optimizer: 0 none | 1 adam: 4 x f64 config, L x (u64 step, m, v)
//!                      | 2 sgd: f64 lr
//! ```
//!
//! A matrix is `u32 rows, u32 cols` followed by its row-major `f64` data.

use std::fs;
use std::path::Path;

use crate::baseline::Mlp;
use crate::encodings::{Bias, ErrorEncoding};
use crate::error::{Error, Result};
use crate::linalg::{ActivationKind, Matrix};
use crate::network::{FeedbackScheme, ModelSpec, PcNetwork};
use crate::optim::{AdamConfig, AdamState, OptimizerSet};
use crate::train::Model;

pub const MAGIC: &[u8; 4] = b"PCCK";
pub const VERSION: u32 = 1;

/// A model snapshot, optionally with the optimizer state needed to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: u32,
    pub model: Model,
    pub optimizer: Option<OptimizerSet>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("value {v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn matrix(&mut self, m: &Matrix) -> Result<()> {
        self.u32(m.rows())?;
        self.u32(m.cols())?;
        for &v in m.data() {
            self.f64(v);
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!(
                "truncated at offset {}: needed {n} bytes, {} left",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bool(&mut self) -> Result<bool> {
        let at = self.pos;
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Checkpoint(format!("bad boolean {v} at offset {at}"))),
        }
    }

    fn matrix(&mut self, expect: (usize, usize)) -> Result<Matrix> {
        let at = self.pos;
        let rows = self.u32()?;
        let cols = self.u32()?;
        if (rows, cols) != expect {
            return Err(Error::Checkpoint(format!(
                "matrix at offset {at} is {rows}x{cols}, expected {}x{}",
                expect.0, expect.1
            )));
        }
        let raw = self.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Matrix::new(rows, cols, data)
    }

    fn activation(&mut self) -> Result<ActivationKind> {
        let at = self.pos;
        let t = self.u8()?;
        ActivationKind::from_tag(t)
            .ok_or_else(|| Error::Checkpoint(format!("unknown activation tag {t} at offset {at}")))
    }
}

fn mlp_spec(mlp: &Mlp) -> ModelSpec {
    ModelSpec {
        dims: mlp.dims().to_vec(),
        hidden_activation: mlp.hidden_activation(),
        output_activation: mlp.output_activation(),
        bias: mlp.bias(),
        ..Default::default()
    }
}

impl Checkpoint {
    pub fn new(epoch: u32, model: Model, optimizer: Option<OptimizerSet>) -> Self {
        Checkpoint {
            epoch,
            model,
            optimizer,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION as usize)?;
        let (kind, spec, feedback) = match &self.model {
            Model::Pc(net) => (0, net.spec().clone(), net.feedback_weights()),
            Model::Mlp(mlp) => (1, mlp_spec(mlp), &[][..]),
        };
        w.u8(kind);
        w.u32(self.epoch as usize)?;
        w.u32(spec.depth())?;
        for &d in &spec.dims {
            w.u32(d)?;
        }
        w.u8(spec.hidden_activation.tag());
        w.u8(spec.output_activation.tag());
        w.u8(spec.encoding.tag());
        match spec.encoding {
            ErrorEncoding::Subtractive => {}
            ErrorEncoding::SubtractiveThreshold { e_min, e_max } => {
                w.f64(e_min);
                w.f64(e_max);
            }
            ErrorEncoding::Division { epsilon } => w.f64(epsilon),
        }
        w.u8(spec.feedback.tag());
        if let FeedbackScheme::KolenPollack { gamma } = spec.feedback {
            w.f64(gamma);
        }
        w.u8(spec.positive_activities as u8);
        w.u8(spec.encode_output as u8);
        w.f64(spec.bias.value());
        for m in self.model.weights() {
            w.matrix(m)?;
        }
        for m in feedback {
            w.matrix(m)?;
        }
        match &self.optimizer {
            None => w.u8(0),
            Some(OptimizerSet::Adam(states)) => {
                if states.len() != spec.depth() {
                    return Err(Error::Checkpoint(format!(
                        "{} adam states for {} layers",
                        states.len(),
                        spec.depth()
                    )));
                }
                w.u8(1);
                let cfg = states.first().map(|s| s.config).unwrap_or_default();
                for v in [cfg.lr, cfg.beta1, cfg.beta2, cfg.eps] {
                    w.f64(v);
                }
                for s in states {
                    if s.config != cfg {
                        return Err(Error::Checkpoint("adam states disagree on hyperparameters".into()));
                    }
                    w.u64(s.step_count());
                    w.matrix(s.first_moment())?;
                    w.matrix(s.second_moment())?;
                }
            }
            Some(OptimizerSet::Sgd { lr }) => {
                w.u8(2);
                w.f64(*lr);
            }
        }
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4).map_err(|_| Error::Checkpoint("file too short for magic bytes".into()))?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic bytes {magic:?}, expected \"PCCK\"")));
        }
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let kind = r.u8()?;
        if kind > 1 {
            return Err(Error::Checkpoint(format!("unknown model kind {kind}")));
        }
        let epoch = r.u32()? as u32;
        let depth = r.u32()?;
        if depth == 0 || depth > 1 << 16 {
            return Err(Error::Checkpoint(format!("implausible layer count {depth}")));
        }
        let dims = (0..=depth).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let hidden_activation = r.activation()?;
        let output_activation = r.activation()?;
        let encoding = match r.u8()? {
            0 => ErrorEncoding::Subtractive,
            1 => ErrorEncoding::SubtractiveThreshold {
                e_min: r.f64()?,
                e_max: r.f64()?,
            },
            2 => ErrorEncoding::Division { epsilon: r.f64()? },
            t => return Err(Error::Checkpoint(format!("unknown encoding tag {t}"))),
        };
        let feedback = match r.u8()? {
            0 => FeedbackScheme::Transpose,
            1 => FeedbackScheme::RandomFixed,
            2 => FeedbackScheme::KolenPollack { gamma: r.f64()? },
            t => return Err(Error::Checkpoint(format!("unknown feedback tag {t}"))),
        };
        let positive_activities = r.bool()?;
        let encode_output = r.bool()?;
        let bias = Bias::new(r.f64()?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let spec = ModelSpec {
            dims,
            hidden_activation,
            output_activation,
            bias,
            encoding,
            feedback,
            positive_activities,
            encode_output,
        };
        spec.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let weights = (0..depth)
            .map(|l| r.matrix((spec.dims[l + 1], spec.dims[l])))
            .collect::<Result<Vec<_>>>()?;
        let model = if kind == 0 {
            let fb = if feedback.has_matrices() {
                (0..depth)
                    .map(|l| r.matrix((spec.dims[l], spec.dims[l + 1])))
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            Model::Pc(PcNetwork::from_parts(spec, weights, fb)?)
        } else {
            Model::Mlp(Mlp::from_parts(
                &spec.dims,
                weights,
                hidden_activation,
                output_activation,
                bias,
            )?)
        };
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let config = AdamConfig {
                    lr: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    eps: r.f64()?,
                };
                let states = model
                    .weights()
                    .iter()
                    .map(|w| {
                        let step = r.u64()?;
                        let m = r.matrix(w.shape())?;
                        let v = r.matrix(w.shape())?;
                        AdamState::from_parts(config, m, v, step)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(OptimizerSet::Adam(states))
            }
            2 => Some(OptimizerSet::Sgd { lr: r.f64()? }),
            t => return Err(Error::Checkpoint(format!("unknown optimizer tag {t}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after offset {}",
                bytes.len() - r.pos,
                r.pos
            )));
        }
        Ok(Checkpoint {
            epoch,
            model,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?)
            .map_err(|e| Error::io(format!("writing checkpoint {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes =
            fs::read(path).map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
