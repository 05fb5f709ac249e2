//! Error-neuron encodings.
//!
//! Three ways of reporting the mismatch between an activity `a` and its
//! effective prediction `phat = f(p) + b`:
//!
//! * subtractive: `e = a - phat` (may be negative);
//! * subtractive threshold: `e* = 2 (e - e_min) / e_max`, a non-negative
//!   rate with baseline `-2 e_min / e_max` when `e = 0`. Update rules decode
//!   it back to `e = (e_max / 2) e* + e_min`, so learning is unchanged;
//! * division mismatch: `e** = sqrt((a + eps) / (phat + eps))`, equal to 1
//!   when the prediction is exact. Its cost is `1/2 (ln e**)^2`.
//!
//! Scalar costs are summed over units and averaged over the batch columns.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{activate, ActivationKind, Matrix};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_E_MIN: f64 = -1.0;
pub const DEFAULT_E_MAX: f64 = 2.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorEncoding {
    Subtractive,
    SubtractiveThreshold { e_min: f64, e_max: f64 },
    Division { epsilon: f64 },
}

impl ErrorEncoding {
    /// Threshold encoding with the default range, shifted down by the bias
    /// (activities minus shifted predictions can reach `-(1 + b)`).
    pub fn threshold_for_bias(bias: Bias) -> Self {
        ErrorEncoding::SubtractiveThreshold {
            e_min: DEFAULT_E_MIN - bias.value(),
            e_max: DEFAULT_E_MAX,
        }
    }

    pub fn division() -> Self {
        ErrorEncoding::Division {
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorEncoding::Subtractive => Ok(()),
            ErrorEncoding::SubtractiveThreshold { e_min, e_max } => {
                if !(e_max > 0.0 && e_max.is_finite()) {
                    return Err(Error::Config(format!("e_max must be positive, got {e_max}")));
                }
                if !(e_min <= 0.0 && e_min.is_finite()) {
                    return Err(Error::Config(format!("e_min must be <= 0, got {e_min}")));
                }
                Ok(())
            }
            ErrorEncoding::Division { epsilon } => {
                if !(epsilon > 0.0 && epsilon.is_finite()) {
                    return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ErrorEncoding::Subtractive => "subtractive",
            ErrorEncoding::SubtractiveThreshold { .. } => "threshold",
            ErrorEncoding::Division { .. } => "division",
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            ErrorEncoding::Subtractive => 0,
            ErrorEncoding::SubtractiveThreshold { .. } => 1,
            ErrorEncoding::Division { .. } => 2,
        }
    }

    pub fn is_division(&self) -> bool {
        matches!(self, ErrorEncoding::Division { .. })
    }
}

impl fmt::Display for ErrorEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorEncoding::Subtractive => write!(f, "subtractive"),
            ErrorEncoding::SubtractiveThreshold { e_min, e_max } => {
                write!(f, "threshold(e_min={e_min}, e_max={e_max})")
            }
            ErrorEncoding::Division { epsilon } => write!(f, "division(epsilon={epsilon})"),
        }
    }
}

/// Uniform non-negative offset added to every prediction after the
/// non-linearity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Bias(f64);

impl Bias {
    pub const ZERO: Bias = Bias(0.0);

    pub fn new(b: f64) -> Result<Self> {
        if b >= 0.0 && b.is_finite() {
            Ok(Bias(b))
        } else {
            Err(Error::Config(format!("bias must be finite and >= 0, got {b}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `f(p) + b`, the effective prediction every encoding compares against.
pub fn predicted_rate(p: &Matrix, f: ActivationKind, b: Bias) -> Matrix {
    let mut out = activate(f, p);
    if b.0 != 0.0 {
        out.map_inplace(|x| x + b.0);
    }
    out
}

pub fn subtractive_error(a: &Matrix, phat: &Matrix) -> Result<Matrix> {
    a.zip_map(phat, "subtractive_error", |x, y| x - y)
}

pub fn threshold_encode(e: &Matrix, e_min: f64, e_max: f64) -> Result<Matrix> {
    if let Some((i, &v)) = e.data().iter().enumerate().find(|(_, &v)| !(v >= e_min)) {
        return Err(Error::EncodingDomain {
            encoding: "threshold",
            detail: format!(
                "error {v} at entry ({}, {}) is below e_min = {e_min}",
                i / e.cols(),
                i % e.cols()
            ),
        });
    }
    let s = 2.0 / e_max;
    Ok(e.map(|v| s * (v - e_min)))
}

pub fn threshold_decode(estar: &Matrix, e_min: f64, e_max: f64) -> Matrix {
    let s = e_max / 2.0;
    estar.map(|v| s * v + e_min)
}

pub fn division_error(a: &Matrix, phat: &Matrix, epsilon: f64) -> Result<Matrix> {
    for (what, m) in [("activity", a), ("prediction", phat)] {
        if let Some(v) = m.data().iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::EncodingDomain {
                encoding: "division",
                detail: format!("{what} {v} is negative; division encoding needs non-negative rates"),
            });
        }
    }
    a.zip_map(phat, "division_error", |x, y| ((x + epsilon) / (y + epsilon)).sqrt())
}

pub fn division_cost(estar2: &Matrix) -> Result<f64> {
    if let Some(v) = estar2.data().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::EncodingDomain {
            encoding: "division",
            detail: format!("mismatch value {v} is not positive"),
        });
    }
    let total: f64 = estar2
        .data()
        .iter()
        .map(|v| {
            let l = v.ln();
            0.5 * l * l
        })
        .sum();
    Ok(total / estar2.cols() as f64)
}

/// `sum_l 1/2 ||e_l||^2`, averaged over the batch.
pub fn energy(errors: &[Matrix]) -> f64 {
    errors
        .iter()
        .map(|e| 0.5 * e.sum_squares() / e.cols() as f64)
        .sum()
}

/// Error-neuron values at one level, in the representation of the encoding
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorSignal {
    Subtractive(Matrix),
    Threshold { encoded: Matrix, decoded: Matrix },
    Division { ratio: Matrix, epsilon: f64 },
}

impl ErrorSignal {
    pub fn compute(encoding: &ErrorEncoding, a: &Matrix, phat: &Matrix) -> Result<Self> {
        Ok(match *encoding {
            ErrorEncoding::Subtractive => ErrorSignal::Subtractive(subtractive_error(a, phat)?),
            ErrorEncoding::SubtractiveThreshold { e_min, e_max } => {
                let encoded = threshold_encode(&subtractive_error(a, phat)?, e_min, e_max)?;
                let decoded = threshold_decode(&encoded, e_min, e_max);
                ErrorSignal::Threshold { encoded, decoded }
            }
            ErrorEncoding::Division { epsilon } => ErrorSignal::Division {
                ratio: division_error(a, phat, epsilon)?,
                epsilon,
            },
        })
    }

    /// The firing-rate values carried by the error neurons.
    pub fn rates(&self) -> &Matrix {
        match self {
            ErrorSignal::Subtractive(e) => e,
            ErrorSignal::Threshold { encoded, .. } => encoded,
            ErrorSignal::Division { ratio, .. } => ratio,
        }
    }

    /// The signed error `a - phat` as seen by the update rules, if the
    /// encoding is from the subtractive family.
    pub fn signed(&self) -> Option<&Matrix> {
        match self {
            ErrorSignal::Subtractive(e) => Some(e),
            ErrorSignal::Threshold { decoded, .. } => Some(decoded),
            ErrorSignal::Division { .. } => None,
        }
    }

    /// Cost contributed by this level, averaged over the batch.
    pub fn cost(&self) -> f64 {
        match self {
            ErrorSignal::Division { ratio, .. } => ratio
                .data()
                .iter()
                .map(|v| {
                    let l = v.ln();
                    0.5 * l * l
                })
                .sum::<f64>()
                / ratio.cols() as f64,
            other => {
                let e = other.signed().expect("subtractive family");
                0.5 * e.sum_squares() / e.cols() as f64
            }
        }
    }

    /// Negative per-sample gradient of this level's cost with respect to the
    /// level's pre-activation `p`, given `f'(p)` and `phat = f(p) + b`.
    ///
    /// Subtractive family: `e * f'(p)`.
    /// Division: `ln(e**) * f'(p) / (2 (phat + eps))`.
    pub fn bottom_up(&self, fprime: &Matrix, phat: &Matrix) -> Result<Matrix> {
        match self {
            ErrorSignal::Division { ratio, epsilon } => {
                let mut out = ratio.zip_map(fprime, "bottom_up", |r, d| r.ln() * d)?;
                for (o, &ph) in out.data_mut().iter_mut().zip(phat.data()) {
                    *o /= 2.0 * (ph + epsilon);
                }
                Ok(out)
            }
            other => other
                .signed()
                .expect("subtractive family")
                .zip_map(fprime, "bottom_up", |e, d| e * d),
        }
    }

    /// Per-sample gradient of this level's cost with respect to its own
    /// activity `a`.
    ///
    /// Subtractive family: `e`. Division: `ln(e**) / (2 (a + eps))`.
    pub fn top_down(&self, a: &Matrix) -> Result<Matrix> {
        match self {
            ErrorSignal::Division { ratio, epsilon } => {
                ratio.zip_map(a, "top_down", |r, x| r.ln() / (2.0 * (x + epsilon)))
            }
            other => Ok(other.signed().expect("subtractive family").clone()),
        }
    }
}
