//! Statistics of the homodyne photon-number difference `delta_n`.
//!
//! In the weak-field limit the record is Gaussian with variance `alpha²`
//! (vacuum fluctuations of the observed quadrature). Conditioned on the
//! atomic state, the record is modelled as a two-component mixture over the
//! dipole eigenstates `s_x = ±1`:
//!
//! ```text
//!   p(dn | s) = p+ N(dn; +mu, alpha²) + p- N(dn; -mu, alpha²)
//!   p± = (1 ± s_x) / 2,   mu = sqrt(gamma*tau) * alpha
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::numeric::normal_pdf;
use crate::state::{BlochState, SimParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Unconditioned vacuum fluctuations; isolates the noise-driven rotation.
    Vacuum,
    /// State-conditioned mixture; the default for dynamics.
    #[default]
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurementRecord {
    pub delta_n: f64,
}

/// Mean shift of each dipole-eigenstate component, `sqrt(gamma*tau) * alpha`.
pub fn component_shift(params: &SimParams) -> f64 {
    params.coupling().sqrt() * params.alpha()
}

pub fn pdf_vacuum(delta_n: f64, alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid(format!("alpha must be finite and > 0, got {alpha}")));
    }
    Ok(normal_pdf(delta_n, 0.0, alpha))
}

pub fn conditional_pdf(delta_n: f64, state: BlochState, params: &SimParams) -> f64 {
    let (p_plus, p_minus) = dipole_weights(state);
    let mu = component_shift(params);
    let sigma = params.alpha();
    p_plus * normal_pdf(delta_n, mu, sigma) + p_minus * normal_pdf(delta_n, -mu, sigma)
}

/// Analytic mean of the conditional record, `sqrt(gamma*tau) * alpha * s_x`.
pub fn conditional_mean(state: BlochState, params: &SimParams) -> f64 {
    component_shift(params) * state.s_x()
}

/// Analytic variance of the conditional record,
/// `alpha² (1 + gamma*tau (1 - s_x²))`.
pub fn conditional_variance(state: BlochState, params: &SimParams) -> f64 {
    let s_x = state.s_x();
    params.alpha().powi(2) * (1.0 + params.coupling() * (1.0 - s_x * s_x))
}

fn dipole_weights(state: BlochState) -> (f64, f64) {
    let s_x = state.s_x();
    ((1.0 + s_x) / 2.0, (1.0 - s_x) / 2.0)
}

pub fn sample_record<R: Rng + ?Sized>(
    state: BlochState,
    params: &SimParams,
    mode: SamplingMode,
    rng: &mut R,
) -> MeasurementRecord {
    let noise: f64 = rng.sample(StandardNormal);
    let delta_n = match mode {
        SamplingMode::Vacuum => params.alpha() * noise,
        SamplingMode::Conditional => {
            let (p_plus, _) = dipole_weights(state);
            let u: f64 = rng.random();
            let mu = component_shift(params);
            let center = if u < p_plus { mu } else { -mu };
            center + params.alpha() * noise
        }
    };
    MeasurementRecord { delta_n }
}

/// Bayesian reweighting of the dipole-eigenstate components by the record
/// likelihoods, followed by purity restoration in the same hemisphere.
pub fn bayes_dipole_update(state: BlochState, delta_n: f64, params: &SimParams) -> BlochState {
    let (p_plus, p_minus) = dipole_weights(state);
    if p_plus == 0.0 || p_minus == 0.0 {
        return state;
    }
    // Likelihood ratio N(+mu)/N(-mu) = exp(2x); weight each side by exp(±x).
    let x = component_shift(params) * delta_n / params.alpha().powi(2);
    let (w_plus, w_minus) = if x >= 0.0 {
        (p_plus, p_minus * (-2.0 * x).exp())
    } else {
        (p_plus * (2.0 * x).exp(), p_minus)
    };
    let s_x = ((w_plus - w_minus) / (w_plus + w_minus)).clamp(-1.0, 1.0);
    let s_z = state.s_z();
    let s_z = if s_z == 0.0 {
        0.0
    } else {
        s_z.signum() * (1.0 - s_x * s_x).max(0.0).sqrt()
    };
    if s_x == 0.0 && s_z == 0.0 {
        return state;
    }
    BlochState::from_components(s_x, s_z).unwrap_or(state)
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Vacuum => "vacuum",
            SamplingMode::Conditional => "conditional",
        })
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vacuum" => Ok(SamplingMode::Vacuum),
            "conditional" => Ok(SamplingMode::Conditional),
            other => Err(invalid(format!(
                "unknown sampling mode {other:?} (expected conditional|vacuum)"
            ))),
        }
    }
}

impl Serialize for SamplingMode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}
