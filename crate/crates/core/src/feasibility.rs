//! One-step feasible control envelope of a CAV.
//!
//! For a follower at step `k` the set of controls that keeps the next state inside
//! the acceleration box, the speed band and the safe-distance constraint is the
//! closed interval
//!
//! ```text
//! [max(a_min, a_lower_v), min(a_max, a_upper_v, a_upper_d)]
//! ```
//!
//! `a_lower_v`/`a_upper_v` come from inverting the speed update; `a_upper_d`
//! from the next-step gap slack. With `delta2 = 1/2` the predecessor's control
//! drops out of `a_upper_d`, and with `delta1 >= delta1_floor` the interval is
//! non-empty for every feasible state (subject to the sign conditions reported by
//! [`check_nonempty_inequalities`]).

use serde::{Deserialize, Serialize};

use crate::dynamics::{safe_distance, step_cav, step_leader, PlatoonState, VehicleState};
use crate::params::{GlobalParams, VehicleParams};

/// Absolute slack used when classifying a constraint residual as satisfied.
pub const FEAS_TOL: f64 = 1e-9;

/// The predecessor as seen by a follower: its current state and the acceleration it
/// realises over the coming step (already net of its own uncertainty term).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predecessor {
    pub state: VehicleState,
    pub accel: f64,
}

impl Predecessor {
    pub fn new(state: VehicleState, accel: f64) -> Self {
        Self { state, accel }
    }

    pub fn next_speed(&self, gp: &GlobalParams) -> f64 {
        self.state.v + gp.tau * self.accel
    }

    pub fn next_state(&self, gp: &GlobalParams) -> VehicleState {
        step_leader(&self.state, self.accel, gp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleInterval {
    pub lo: f64,
    pub hi: f64,
    pub a_lower_v: f64,
    pub a_upper_v: f64,
    /// Absent for a vehicle without predecessor.
    pub a_upper_d: Option<f64>,
    pub non_empty: bool,
}

impl FeasibleInterval {
    pub fn contains(&self, u: f64) -> bool {
        self.lo <= u && u <= self.hi
    }

    pub fn contains_within(&self, u: f64, tol: f64) -> bool {
        self.lo - tol <= u && u <= self.hi + tol
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// `n >= 2` evenly spaced controls from `lo` to `hi`, both endpoints included.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        assert!(n >= 2);
        (0..n)
            .map(|j| {
                if j == n - 1 {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * j as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.max(self.lo).min(self.hi)
    }
}

/// Bounds on `u` that keep the next speed in `[v_min, v_max]`.
pub fn speed_bounds(state: &VehicleState, vp: &VehicleParams, gp: &GlobalParams) -> (f64, f64) {
    let tau = gp.tau;
    let carried = (1.0 - tau * vp.eps) * state.v + tau * vp.eta * state.u_prev;
    let denom = tau * (1.0 - vp.eta);
    ((gp.v_min - carried) / denom, (gp.v_max - carried) / denom)
}

/// Gap minus safe distance; non-negative iff the safe-distance constraint holds.
pub fn g_slack(lead: &VehicleState, follow: &VehicleState, vp: &VehicleParams, gp: &GlobalParams) -> f64 {
    lead.x - follow.x - safe_distance(follow.v, lead.v, vp, gp)
}

/// Next-step gap slack written in terms of the current slack and the two realised
/// accelerations:
///
/// `g(k+1) = g(k) + tau (v_lead(k+1) - v(k)) + tau² (delta2 - 1/2) a_lead - tau² (delta1 + delta2 + 1/2) a_follow`
pub fn next_gap_slack(
    pred: &Predecessor,
    follow: &VehicleState,
    follow_accel: f64,
    vp: &VehicleParams,
    gp: &GlobalParams,
) -> f64 {
    let tau = gp.tau;
    let g = g_slack(&pred.state, follow, vp, gp);
    g + tau * (pred.next_speed(gp) - follow.v) + tau * tau * (gp.delta2 - 0.5) * pred.accel
        - tau * tau * (gp.delta1 + gp.delta2 + 0.5) * follow_accel
}

/// Largest control keeping the next-step gap slack non-negative.
///
/// The bound is implicit in `u` through the uncertainty term; it is solved here in
/// closed form, which introduces the `1 - eta` denominator.
pub fn safety_upper_bound(pred: &Predecessor, follow: &VehicleState, vp: &VehicleParams, gp: &GlobalParams) -> f64 {
    let tau = gp.tau;
    let g = g_slack(&pred.state, follow, vp, gp);
    let coupling = gp.delta1 + gp.delta2 + 0.5;
    // Largest realised acceleration allowed for the follower.
    let mut accel_cap = (g + tau * (pred.next_speed(gp) - follow.v)) / (tau * tau * coupling);
    if !gp.on_verified_delta2() {
        accel_cap += (gp.delta2 - 0.5) * pred.accel / coupling;
    }
    (accel_cap + vp.eps * follow.v - vp.eta * follow.u_prev) / (1.0 - vp.eta)
}

pub fn feasible_interval(
    pred: Option<&Predecessor>,
    follow: &VehicleState,
    vp: &VehicleParams,
    gp: &GlobalParams,
) -> FeasibleInterval {
    let (a_lower_v, a_upper_v) = speed_bounds(follow, vp, gp);
    let a_upper_d = pred.map(|p| safety_upper_bound(p, follow, vp, gp));
    let lo = vp.a_min.max(a_lower_v);
    let hi = a_upper_d.map_or(vp.a_max.min(a_upper_v), |d| vp.a_max.min(a_upper_v).min(d));
    FeasibleInterval { lo, hi, a_lower_v, a_upper_v, a_upper_d, non_empty: lo <= hi }
}

/// Smallest `delta1` for which the safety bound never falls below the braking limit.
pub fn delta1_floor(vp: &VehicleParams, gp: &GlobalParams) -> f64 {
    let ratio = (gp.v_min - gp.v_max) / (gp.tau * (vp.a_min - vp.eps * gp.v_min));
    (ratio - 1.0).max(1.0)
}

/// Platoon-wide `delta1`: the largest per-vehicle floor.
pub fn platoon_delta1_floor(vps: &[VehicleParams], gp: &GlobalParams) -> f64 {
    vps.iter().map(|vp| delta1_floor(vp, gp)).fold(1.0, f64::max)
}

/// Global parameters moved onto the regime in which non-emptiness is claimed.
pub fn verified_regime(vps: &[VehicleParams], gp: &GlobalParams) -> GlobalParams {
    GlobalParams { delta1: platoon_delta1_floor(vps, gp), delta2: 0.5, ..*gp }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub label: &'static str,
    pub slack: f64,
    pub holds: bool,
}

/// Slack of each pairwise comparison whose conjunction makes the interval non-empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonemptyReport {
    pub checks: Vec<InequalityCheck>,
    /// `delta1 >= delta1_floor` and `delta2 = 1/2`.
    pub in_verified_regime: bool,
}

impl NonemptyReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn failing(&self) -> impl Iterator<Item = &InequalityCheck> {
        self.checks.iter().filter(|c| !c.holds)
    }
}

pub fn check_nonempty_inequalities(
    pred: Option<&Predecessor>,
    follow: &VehicleState,
    vp: &VehicleParams,
    gp: &GlobalParams,
) -> NonemptyReport {
    let iv = feasible_interval(pred, follow, vp, gp);
    let d = iv.a_upper_d.unwrap_or(f64::INFINITY);
    let items = [
        ("(i) a_max >= a_min", vp.a_max - vp.a_min),
        ("(ii) a_max >= a_lower_v", vp.a_max - iv.a_lower_v),
        ("(iii) a_upper_v >= a_min", iv.a_upper_v - vp.a_min),
        ("(iv) a_upper_v >= a_lower_v", iv.a_upper_v - iv.a_lower_v),
        ("(v) a_upper_d >= a_min", d - vp.a_min),
        ("(vi) a_upper_d >= a_lower_v", d - iv.a_lower_v),
    ];
    NonemptyReport {
        checks: items
            .into_iter()
            .map(|(label, slack)| InequalityCheck { label, slack, holds: slack >= 0.0 })
            .collect(),
        in_verified_regime: gp.on_verified_delta2() && gp.delta1 >= delta1_floor(vp, gp),
    }
}

/// Smallest value of `a_upper_d - a_min` over all feasible states: zero gap slack,
/// predecessor dropping to `v_min`, previous control at `a_max`, and the follower at
/// whichever end of the speed band is worse. Negative means the envelope can become
/// empty at some feasible state even in the verified regime.
pub fn worst_case_braking_slack(vp: &VehicleParams, gp: &GlobalParams) -> f64 {
    let reach = 1.0 / (gp.tau * (gp.delta1 + 1.0));
    let at = |v: f64| (vp.eps * v - vp.eta * vp.a_max + (gp.v_min - v) * reach) / (1.0 - vp.eta) - vp.a_min;
    at(gp.v_max).min(at(gp.v_min))
}

/// Residuals of the speed band and the safe-distance constraint for one follower;
/// all are non-negative when the state is feasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub speed_low: f64,
    pub speed_high: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn worst(&self) -> f64 {
        self.speed_low.min(self.speed_high).min(self.gap)
    }
}

pub fn residuals(lead: &VehicleState, follow: &VehicleState, vp: &VehicleParams, gp: &GlobalParams) -> Residuals {
    Residuals {
        speed_low: follow.v - gp.v_min,
        speed_high: gp.v_max - follow.v,
        gap: g_slack(lead, follow, vp, gp),
    }
}

/// Residuals of every CAV of a platoon.
pub fn platoon_residuals(state: &PlatoonState, vps: &[VehicleParams], gp: &GlobalParams) -> Vec<Residuals> {
    let mut lead = &state.leader;
    state
        .cavs
        .iter()
        .zip(vps)
        .map(|(cav, vp)| {
            let r = residuals(lead, cav, vp, gp);
            lead = cav;
            r
        })
        .collect()
}

/// Whether every CAV satisfies the speed band and the safe distance within [`FEAS_TOL`].
pub fn platoon_is_feasible(state: &PlatoonState, vps: &[VehicleParams], gp: &GlobalParams) -> bool {
    platoon_residuals(state, vps, gp).iter().all(|r| r.worst() >= -FEAS_TOL)
}

/// Outcome of advancing a platoon one step with envelope-aware control selection.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeStep {
    pub next: PlatoonState,
    pub intervals: Vec<FeasibleInterval>,
    pub controls: Vec<f64>,
}

/// Advance the platoon by one step. Envelopes are computed front to rear so that
/// each follower sees its predecessor's committed acceleration; `choose` receives
/// the CAV index (0-based) and its envelope and returns the control to apply.
pub fn step_platoon_with<F>(
    state: &PlatoonState,
    leader_accel: f64,
    vps: &[VehicleParams],
    gp: &GlobalParams,
    mut choose: F,
) -> EnvelopeStep
where
    F: FnMut(usize, &FeasibleInterval) -> f64,
{
    let mut pred = Predecessor::new(state.leader, leader_accel);
    let mut next_cavs = Vec::with_capacity(state.cavs.len());
    let mut intervals = Vec::with_capacity(state.cavs.len());
    let mut controls = Vec::with_capacity(state.cavs.len());
    for (i, (cav, vp)) in state.cavs.iter().zip(vps).enumerate() {
        let iv = feasible_interval(Some(&pred), cav, vp, gp);
        let u = choose(i, &iv);
        let next = step_cav(cav, u, vp, gp);
        pred = Predecessor::new(*cav, (next.v - cav.v) / gp.tau);
        intervals.push(iv);
        controls.push(u);
        next_cavs.push(next);
    }
    EnvelopeStep {
        next: PlatoonState { leader: step_leader(&state.leader, leader_accel, gp), cavs: next_cavs, step: state.step + 1 },
        intervals,
        controls,
    }
}
