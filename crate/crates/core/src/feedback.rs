//! Feedback scenarios expressed as a single gain on the record-driven
//! rotation. A gain `g` adds the rotation `-g * sqrt(gamma*tau) * delta_n / alpha`
//! in the same step as the measurement.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::state::SimParams;

/// Largest custom gain magnitude accepted.
pub const MAX_CUSTOM_GAIN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedbackPolicy {
    NoFeedback,
    /// Cancels the rotation driven by the observed quadrature noise.
    Compensation,
    /// Twice the compensating feedback: excited and ground roles swap.
    Inversion,
    Custom(f64),
}

impl FeedbackPolicy {
    pub fn custom(gain: f64) -> Result<Self> {
        if !gain.is_finite() || gain.abs() > MAX_CUSTOM_GAIN {
            return Err(invalid(format!(
                "custom gain must be finite with |g| <= {MAX_CUSTOM_GAIN}, got {gain}"
            )));
        }
        Ok(FeedbackPolicy::Custom(gain))
    }

    pub fn gain(self) -> f64 {
        match self {
            FeedbackPolicy::NoFeedback => 0.0,
            FeedbackPolicy::Compensation => 1.0,
            FeedbackPolicy::Inversion => 2.0,
            FeedbackPolicy::Custom(g) => g,
        }
    }
}

pub fn gain(policy: FeedbackPolicy) -> f64 {
    policy.gain()
}

/// Rotation contributed by feedback alone.
pub fn feedback_rotation(delta_n: f64, params: &SimParams, gain: f64) -> f64 {
    -gain * params.coupling().sqrt() * (delta_n / params.alpha())
}

impl fmt::Display for FeedbackPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackPolicy::NoFeedback => f.write_str("none"),
            FeedbackPolicy::Compensation => f.write_str("compensate"),
            FeedbackPolicy::Inversion => f.write_str("invert"),
            FeedbackPolicy::Custom(g) => write!(f, "custom:{g}"),
        }
    }
}

impl FromStr for FeedbackPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FeedbackPolicy::NoFeedback),
            "compensate" => Ok(FeedbackPolicy::Compensation),
            "invert" => Ok(FeedbackPolicy::Inversion),
            other => match other.strip_prefix("custom:") {
                Some(g) => {
                    let g: f64 = g
                        .trim()
                        .parse()
                        .map_err(|_| invalid(format!("bad custom gain {g:?}")))?;
                    FeedbackPolicy::custom(g)
                }
                None => Err(invalid(format!(
                    "unknown policy {other:?} (expected none|compensate|invert|custom:G)"
                ))),
            },
        }
    }
}

impl Serialize for FeedbackPolicy {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}
