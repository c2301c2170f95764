//! Discrete-time vehicle models and the spacing algebra of the platoon.
//!
//! CAVs follow a double integrator whose applied acceleration is reduced by an
//! uncertainty term `du = eps * v + eta * u - eta * u_prev`. The HDV at index 0
//! is exogenous; [`predict_hdv`] provides the Newell shift predictor for it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{GlobalParams, NewellParams, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Position (m).
    pub x: f64,
    /// Speed (m/s).
    pub v: f64,
    /// Control applied at the previous step (m/s²).
    pub u_prev: f64,
}

impl VehicleState {
    pub fn new(x: f64, v: f64, u_prev: f64) -> Self {
        Self { x, v, u_prev }
    }
}

/// Leader (HDV, index 0) plus the CAVs `1..=N` in front-to-rear order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonState {
    pub leader: VehicleState,
    pub cavs: Vec<VehicleState>,
    pub step: i64,
}

impl PlatoonState {
    pub fn new(leader: VehicleState, cavs: Vec<VehicleState>, step: i64) -> Result<Self> {
        let state = Self { leader, cavs, step };
        state.check_order()?;
        Ok(state)
    }

    pub fn check_order(&self) -> Result<()> {
        let mut ahead = self.leader.x;
        for (i, cav) in self.cavs.iter().enumerate() {
            if cav.x >= ahead {
                return Err(Error::InvalidParams {
                    name: "positions",
                    reason: format!("vehicle {} at {} is not behind its predecessor at {}", i + 1, cav.x, ahead),
                });
            }
            ahead = cav.x;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cavs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cavs.is_empty()
    }

    /// State of vehicle `i`, where 0 is the leader.
    pub fn vehicle(&self, i: usize) -> &VehicleState {
        if i == 0 {
            &self.leader
        } else {
            &self.cavs[i - 1]
        }
    }
}

/// `du = eps * v + eta * u - eta * u_prev`.
pub fn control_uncertainty(state: &VehicleState, u: f64, vp: &VehicleParams) -> f64 {
    vp.eps * state.v + vp.eta * u - vp.eta * state.u_prev
}

/// Acceleration actually realised by the vehicle, `u - du`.
pub fn effective_accel(state: &VehicleState, u: f64, vp: &VehicleParams) -> f64 {
    u - control_uncertainty(state, u, vp)
}

/// Control that realises acceleration `accel` over the next step.
pub fn control_for_accel(state: &VehicleState, accel: f64, vp: &VehicleParams) -> f64 {
    (accel + vp.eps * state.v - vp.eta * state.u_prev) / (1.0 - vp.eta)
}

/// Advance one CAV by one step.
pub fn step_cav(state: &VehicleState, u: f64, vp: &VehicleParams, gp: &GlobalParams) -> VehicleState {
    let tau = gp.tau;
    let a = effective_accel(state, u, vp);
    VehicleState {
        x: state.x + tau * state.v + 0.5 * tau * tau * a,
        v: state.v + tau * a,
        u_prev: u,
    }
}

/// Exogenous motion of the leader with a given realised acceleration (no uncertainty term).
pub fn step_leader(state: &VehicleState, accel: f64, gp: &GlobalParams) -> VehicleState {
    let tau = gp.tau;
    VehicleState {
        x: state.x + tau * state.v + 0.5 * tau * tau * accel,
        v: state.v + tau * accel,
        u_prev: accel,
    }
}

/// Control that puts the speed at `v_target` after one step, inverting the
/// speed update including the uncertainty term.
pub fn speed_target_control(state: &VehicleState, v_target: f64, vp: &VehicleParams, gp: &GlobalParams) -> f64 {
    let tau = gp.tau;
    (v_target - (1.0 - tau * vp.eps) * state.v - tau * vp.eta * state.u_prev) / (tau * (1.0 - vp.eta))
}

/// Recorded positions of the vehicle whose shifted trajectory predicts the HDV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionHistory {
    pub first_step: i64,
    pub positions: Vec<f64>,
}

impl PositionHistory {
    pub fn new(first_step: i64, positions: Vec<f64>) -> Self {
        Self { first_step, positions }
    }

    pub fn at(&self, k: i64) -> Option<f64> {
        let idx = k - self.first_step;
        if idx < 0 {
            return None;
        }
        self.positions.get(idx as usize).copied()
    }
}

/// Newell prediction: the position recorded `shift_steps` earlier, moved back by `shift_dist`.
pub fn predict_hdv(history: &PositionHistory, np: &NewellParams, k: i64) -> Result<f64> {
    let src = k - i64::from(np.shift_steps);
    history.at(src).map(|x| x - np.shift_dist).ok_or(Error::InsufficientHistory {
        requested: src,
        first: history.first_step,
        last: history.first_step + history.positions.len() as i64 - 1,
    })
}

/// `L + delta1 * tau * v_follow + delta2 * tau * (v_follow - v_lead)`.
pub fn safe_distance(v_follow: f64, v_lead: f64, vp: &VehicleParams, gp: &GlobalParams) -> f64 {
    vp.length + gp.delta1 * gp.tau * v_follow + gp.delta2 * gp.tau * (v_follow - v_lead)
}

/// Safe distance plus the desired-spacing margin.
pub fn desired_spacing(v_follow: f64, v_lead: f64, vp: &VehicleParams, gp: &GlobalParams) -> f64 {
    safe_distance(v_follow, v_lead, vp, gp) + gp.delta_margin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingErrors {
    /// Spacing errors (m), one per CAV.
    pub z: Vec<f64>,
    /// Speed errors `v_{i-1} - v_i` (m/s), one per CAV.
    pub z_prime: Vec<f64>,
}

/// Spacing error of a single follower against its predecessor.
pub fn spacing_error(lead: &VehicleState, follow: &VehicleState, vp: &VehicleParams, gp: &GlobalParams) -> f64 {
    lead.x - follow.x - desired_spacing(follow.v, lead.v, vp, gp)
}

pub fn tracking_errors(state: &PlatoonState, vps: &[VehicleParams], gp: &GlobalParams) -> TrackingErrors {
    assert_eq!(vps.len(), state.cavs.len(), "one parameter block per CAV");
    let mut z = Vec::with_capacity(state.cavs.len());
    let mut z_prime = Vec::with_capacity(state.cavs.len());
    let mut lead = &state.leader;
    for (follow, vp) in state.cavs.iter().zip(vps) {
        z.push(spacing_error(lead, follow, vp, gp));
        z_prime.push(lead.v - follow.v);
        lead = follow;
    }
    TrackingErrors { z, z_prime }
}
