//! Parametric comparison functions (class K / K-infinity) used by the
//! quantization feasibility checks: linear gains, power laws, and monotone
//! piecewise-linear tables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KFunctionError {
    #[error("invalid k-function: {0}")]
    Invalid(String),
    #[error("k-function is not invertible")]
    NotInvertible,
}

/// A monotone comparison function on the nonnegative reals, zero at zero.
///
/// `Linear { gain: 0 }` is allowed because one-step decay slices of KL
/// functions can be identically zero (a nilpotent linear system, say); use
/// [`KFunction::is_class_k`] where strict increase is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase", deny_unknown_fields)]
pub enum KFunction {
    /// `r -> gain * r`
    Linear { gain: f64 },
    /// `r -> gain * r^exponent`
    Power { gain: f64, exponent: f64 },
    /// Piecewise-linear interpolation through `(0,0)` and the given points,
    /// extrapolated beyond the last point with the final slope.
    Table { points: Vec<(f64, f64)> },
}

impl KFunction {
    pub fn linear(gain: f64) -> Result<Self, KFunctionError> {
        let f = KFunction::Linear { gain };
        f.validate()?;
        Ok(f)
    }

    pub fn power(gain: f64, exponent: f64) -> Result<Self, KFunctionError> {
        let f = KFunction::Power { gain, exponent };
        f.validate()?;
        Ok(f)
    }

    pub fn table(points: Vec<(f64, f64)>) -> Result<Self, KFunctionError> {
        let f = KFunction::Table { points };
        f.validate()?;
        Ok(f)
    }

    pub fn identity() -> Self {
        KFunction::Linear { gain: 1.0 }
    }

    pub fn validate(&self) -> Result<(), KFunctionError> {
        match self {
            KFunction::Linear { gain } => {
                if !gain.is_finite() || *gain < 0.0 {
                    return Err(KFunctionError::Invalid(format!(
                        "linear gain must be finite and nonnegative, got {gain}"
                    )));
                }
            }
            KFunction::Power { gain, exponent } => {
                if !gain.is_finite() || *gain <= 0.0 || !exponent.is_finite() || *exponent <= 0.0 {
                    return Err(KFunctionError::Invalid(format!(
                        "power form needs positive finite gain and exponent, got gain {gain}, exponent {exponent}"
                    )));
                }
            }
            KFunction::Table { points } => {
                if points.is_empty() {
                    return Err(KFunctionError::Invalid("table needs at least one point".into()));
                }
                let mut prev = (0.0, 0.0);
                for &(x, y) in points {
                    if !x.is_finite() || !y.is_finite() || x <= prev.0 || y <= prev.1 {
                        return Err(KFunctionError::Invalid(format!(
                            "table points must be finite and strictly increasing from (0,0), offending point ({x},{y})"
                        )));
                    }
                    prev = (x, y);
                }
            }
        }
        Ok(())
    }

    /// Strictly increasing with value zero at zero.
    pub fn is_class_k(&self) -> bool {
        match self {
            KFunction::Linear { gain } => *gain > 0.0,
            KFunction::Power { .. } => true,
            KFunction::Table { .. } => true,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0, "k-functions are defined on nonnegative reals");
        match self {
            KFunction::Linear { gain } => gain * r,
            KFunction::Power { gain, exponent } => gain * r.powf(*exponent),
            KFunction::Table { points } => {
                if r <= 0.0 {
                    return 0.0;
                }
                let mut prev = (0.0, 0.0);
                for &(x, y) in points {
                    if r <= x {
                        return prev.1 + (y - prev.1) * (r - prev.0) / (x - prev.0);
                    }
                    prev = (x, y);
                }
                let &(x_last, y_last) = points.last().expect("validated nonempty");
                let (x_prev, y_prev) = if points.len() >= 2 {
                    points[points.len() - 2]
                } else {
                    (0.0, 0.0)
                };
                y_last + (r - x_last) * (y_last - y_prev) / (x_last - x_prev)
            }
        }
    }

    /// Inverse where defined; errors when the function is not strictly
    /// increasing (for example a zero linear gain).
    pub fn inverse(&self, v: f64) -> Result<f64, KFunctionError> {
        if !self.is_class_k() {
            return Err(KFunctionError::NotInvertible);
        }
        debug_assert!(v >= 0.0);
        Ok(match self {
            KFunction::Linear { gain } => v / gain,
            KFunction::Power { gain, exponent } => (v / gain).powf(1.0 / exponent),
            KFunction::Table { points } => {
                if v <= 0.0 {
                    return Ok(0.0);
                }
                let mut prev = (0.0, 0.0);
                for &(x, y) in points {
                    if v <= y {
                        return Ok(prev.0 + (x - prev.0) * (v - prev.1) / (y - prev.1));
                    }
                    prev = (x, y);
                }
                let &(x_last, y_last) = points.last().expect("validated nonempty");
                let (x_prev, y_prev) = if points.len() >= 2 {
                    points[points.len() - 2]
                } else {
                    (0.0, 0.0)
                };
                x_last + (v - y_last) * (x_last - x_prev) / (y_last - y_prev)
            }
        })
    }
}
