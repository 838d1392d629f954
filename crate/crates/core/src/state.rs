//! Atomic state on the `s_y = 0` great circle of the Bloch sphere and the
//! rotation back-action of a single homodyne record.
//!
//! The state is stored as the polar angle `phi` measured from the excited
//! state, so that `s_x = sin(phi)` and `s_z = cos(phi)`:
//!
//! ```text
//!   phi = 0      excited state    (s_x, s_z) = ( 0, +1)
//!   phi = +pi/2  dipole +         (s_x, s_z) = (+1,  0)
//!   phi = pi     ground state     (s_x, s_z) = ( 0, -1)
//!   phi = -pi/2  dipole -         (s_x, s_z) = (-1,  0)
//! ```
//!
//! A record `delta_n` rotates the state about the y-axis by
//! `sqrt(gamma * tau) * (delta_n / alpha) * (1 + s_z - g)`, where `g` is the
//! feedback gain (see [`crate::feedback`]).

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Hard upper bound on `gamma * tau`.
pub const MAX_COUPLING: f64 = 0.1;
/// Above this `gamma * tau` the weak-coupling approximation is only marginal.
pub const WARN_COUPLING: f64 = 0.01;

/// Pure atomic state with `s_y = 0`, stored as an angle in `(-pi, pi]`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    phi: f64,
}

impl BlochState {
    pub const EXCITED: BlochState = BlochState { phi: 0.0 };
    pub const GROUND: BlochState = BlochState { phi: PI };
    pub const DIPOLE_PLUS: BlochState = BlochState { phi: FRAC_PI_2 };
    pub const DIPOLE_MINUS: BlochState = BlochState { phi: -FRAC_PI_2 };

    /// Builds a state from any finite angle.
    pub fn from_angle(phi: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(invalid(format!("Bloch angle must be finite, got {phi}")));
        }
        Ok(BlochState {
            phi: normalize_angle(phi),
        })
    }

    /// Builds a state from Bloch components. The pair is projected onto the
    /// unit circle; it must not be the origin.
    pub fn from_components(s_x: f64, s_z: f64) -> Result<Self> {
        if !(s_x.is_finite() && s_z.is_finite()) || (s_x == 0.0 && s_z == 0.0) {
            return Err(invalid(format!(
                "Bloch components ({s_x}, {s_z}) do not define a direction"
            )));
        }
        Ok(BlochState {
            phi: normalize_angle(s_x.atan2(s_z)),
        })
    }

    pub fn phi(self) -> f64 {
        self.phi
    }

    /// Observed dipole component.
    pub fn s_x(self) -> f64 {
        match self.anchor() {
            Some((s_x, _)) => s_x,
            None => self.phi.sin(),
        }
    }

    /// Atomic inversion.
    pub fn s_z(self) -> f64 {
        match self.anchor() {
            Some((_, s_z)) => s_z,
            None => self.phi.cos(),
        }
    }

    pub fn components(self) -> (f64, f64) {
        (self.s_x(), self.s_z())
    }

    /// `|s_x² + s_z² - 1|`.
    pub fn purity_error(self) -> f64 {
        let (s_x, s_z) = self.components();
        (s_x * s_x + s_z * s_z - 1.0).abs()
    }

    // The four cardinal states have exact components so that fixed-point
    // conditions such as `1 + s_z - g == 0` hold without rounding residue.
    fn anchor(self) -> Option<(f64, f64)> {
        if self.phi == 0.0 {
            Some((0.0, 1.0))
        } else if self.phi == FRAC_PI_2 {
            Some((1.0, 0.0))
        } else if self.phi == -FRAC_PI_2 {
            Some((-1.0, 0.0))
        } else if self.phi == PI {
            Some((0.0, -1.0))
        } else {
            None
        }
    }
}

impl Default for BlochState {
    fn default() -> Self {
        BlochState::EXCITED
    }
}

impl fmt::Debug for BlochState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (s_x, s_z) = self.components();
        f.debug_struct("BlochState")
            .field("phi", &self.phi)
            .field("s_x", &s_x)
            .field("s_z", &s_z)
            .finish()
    }
}

/// Maps any finite angle into `(-pi, pi]`. Angles already in range are
/// returned bit-for-bit.
pub fn normalize_angle(phi: f64) -> f64 {
    if phi > -PI && phi <= PI {
        return phi;
    }
    let r = phi.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Decay rate, measurement interval and local-oscillator amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimParams {
    gamma: f64,
    tau: f64,
    alpha: f64,
}

impl SimParams {
    pub fn new(gamma: f64, tau: f64, alpha: f64) -> Result<Self> {
        for (name, value) in [("gamma", gamma), ("tau", tau), ("alpha", alpha)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        let coupling = gamma * tau;
        if coupling > MAX_COUPLING {
            return Err(invalid(format!(
                "gamma*tau = {coupling} exceeds the weak-coupling limit {MAX_COUPLING}"
            )));
        }
        Ok(SimParams { gamma, tau, alpha })
    }

    /// Parameters with `gamma = 1` so that `tau` is the dimensionless `gamma * tau`.
    pub fn with_coupling(coupling: f64, alpha: f64) -> Result<Self> {
        SimParams::new(1.0, coupling, alpha)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The small parameter `gamma * tau`.
    pub fn coupling(&self) -> f64 {
        self.gamma * self.tau
    }

    /// Returns a message when `gamma * tau` is valid but above [`WARN_COUPLING`].
    pub fn coupling_warning(&self) -> Option<String> {
        let c = self.coupling();
        (c > WARN_COUPLING).then(|| {
            format!("gamma*tau = {c} is above {WARN_COUPLING}; weak-coupling results are approximate")
        })
    }
}

/// Back-action rotation angle for record `delta_n`, evaluated with the
/// pre-measurement inversion `s_z`.
pub fn rotation_angle(s_z: f64, delta_n: f64, params: &SimParams, gain: f64) -> f64 {
    let lever = (1.0 + s_z) - gain;
    if lever == 0.0 {
        return 0.0;
    }
    params.coupling().sqrt() * (delta_n / params.alpha()) * lever
}

/// Rotates the state by `theta` about the y-axis (positive `theta` carries
/// the excited state towards `s_x = +1`).
pub fn apply_rotation(state: BlochState, theta: f64) -> BlochState {
    BlochState {
        phi: normalize_angle(state.phi + theta),
    }
}

/// First-order increments `(theta * s_z, -theta * s_x)`. Only used for
/// comparisons; dynamics always use the finite rotation.
pub fn linearized_update(
    state: BlochState,
    delta_n: f64,
    params: &SimParams,
    gain: f64,
) -> (f64, f64) {
    let (s_x, s_z) = state.components();
    let theta = rotation_angle(s_z, delta_n, params, gain);
    (theta * s_z, -theta * s_x)
}
