//! Parameter blocks shared by every module. All values are SI.

use serde::{Deserialize, Serialize};

use crate::error::{check, Result};

/// Per-CAV physical limits and the coefficients of the control-uncertainty term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Acceleration lower limit (m/s², negative).
    pub a_min: f64,
    /// Acceleration upper limit (m/s², positive).
    pub a_max: f64,
    /// Speed coefficient of the uncertainty term (1/s).
    pub eps: f64,
    /// Control coefficient of the uncertainty term, in `[0, 1)`.
    pub eta: f64,
    /// Effective vehicle length plus standstill gap (m).
    pub length: f64,
}

/// Passenger car without uncertainty term: braking at 5 m/s², accelerating at 2.5 m/s².
impl Default for VehicleParams {
    fn default() -> Self {
        Self { a_min: -5.0, a_max: 2.5, eps: 0.0, eta: 0.0, length: 5.0 }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        check(self.a_min < 0.0, "a_min", || format!("must be negative, got {}", self.a_min))?;
        check(self.a_max > 0.0, "a_max", || format!("must be positive, got {}", self.a_max))?;
        check(self.eps >= 0.0, "eps", || format!("must be non-negative, got {}", self.eps))?;
        check((0.0..1.0).contains(&self.eta), "eta", || {
            format!("must lie in [0, 1), got {}", self.eta)
        })?;
        check(self.length > 0.0, "length", || format!("must be positive, got {}", self.length))?;
        Ok(())
    }

    /// Same limits with the uncertainty term switched off.
    pub fn nominal(&self) -> Self {
        Self { eps: 0.0, eta: 0.0, ..*self }
    }
}

/// Platoon-wide constants: time step, speed band and spacing-policy coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalParams {
    /// Time-step length (s).
    pub tau: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Speed coefficient of the safe distance (dimensionless, >= 1).
    pub delta1: f64,
    /// Relative-speed coefficient of the safe distance (dimensionless, >= 0).
    pub delta2: f64,
    /// Extra margin of the desired spacing over the safe distance (m).
    pub delta_margin: f64,
}

/// One-second steps on a 0 to 20 m/s band. `delta1 = 3` is the smallest value for
/// which the envelope stays non-empty with the default vehicle.
impl Default for GlobalParams {
    fn default() -> Self {
        Self { tau: 1.0, v_min: 0.0, v_max: 20.0, delta1: 3.0, delta2: 0.5, delta_margin: 2.0 }
    }
}

impl GlobalParams {
    pub fn validate(&self) -> Result<()> {
        check(self.tau > 0.0, "tau", || format!("must be positive, got {}", self.tau))?;
        check(self.v_min >= 0.0, "v_min", || format!("must be non-negative, got {}", self.v_min))?;
        check(self.v_min < self.v_max, "v_max", || {
            format!("must exceed v_min ({} >= {})", self.v_min, self.v_max)
        })?;
        check(self.delta1 >= 1.0, "delta1", || format!("must be >= 1, got {}", self.delta1))?;
        check(self.delta2 >= 0.0, "delta2", || format!("must be >= 0, got {}", self.delta2))?;
        check(self.delta_margin >= 0.0, "delta_margin", || {
            format!("must be >= 0, got {}", self.delta_margin)
        })?;
        Ok(())
    }

    /// Whether the relative-speed coefficient sits on the value that cancels the
    /// predecessor-control term of the safety bound.
    pub fn on_verified_delta2(&self) -> bool {
        self.delta2 == 0.5
    }
}

/// Time/space shift of the Newell car-following predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewellParams {
    pub shift_steps: u32,
    pub shift_dist: f64,
}

impl Default for NewellParams {
    fn default() -> Self {
        Self { shift_steps: 1, shift_dist: 7.0 }
    }
}

impl NewellParams {
    pub fn validate(&self) -> Result<()> {
        check(self.shift_steps >= 1, "shift_steps", || "must be >= 1".into())?;
        check(self.shift_dist > 0.0, "shift_dist", || {
            format!("must be positive, got {}", self.shift_dist)
        })?;
        Ok(())
    }
}
