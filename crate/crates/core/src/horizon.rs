//! Step-count and prediction-horizon lower bounds for a platoon behind a
//! constant-speed leader.
//!
//! A single follower starting from an admissible state is first driven onto its
//! safe-distance bound at a speed no lower than the leader's (the transition time
//! `rho_t`), then brought to zero spacing and speed error (`rho = rho_1 + rho_2`).
//! The per-vehicle horizon bound is `rho_t + rho`; a platoon of `n` followers is
//! covered by the sum of the per-vehicle bounds, and [`blended_horizon`] trades
//! that conservative sum against the maximum.

use serde::{Deserialize, Serialize};

use crate::dynamics::{desired_spacing, safe_distance};
use crate::error::{check, Error, Result};
use crate::maneuver;
use crate::params::{GlobalParams, VehicleParams};

/// Admission tolerance on the equality gap of the boundary-riding scenario (m).
pub const BOUNDARY_TOL: f64 = 1e-6;

/// Ceiling of a non-negative step count with a 1e-12 relative nudge, so that
/// quotients that should be integers do not jump to the next step.
pub fn ceil_steps(x: f64) -> u64 {
    if x.is_nan() || x <= 0.0 {
        return 0;
    }
    (x - 1e-12 * x.max(1.0)).ceil().max(0.0) as u64
}

/// One follower behind a leader driving at constant speed `v0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioE1 {
    /// Leader speed (m/s).
    pub v0: f64,
    /// Follower initial speed (m/s).
    pub v1_0: f64,
    /// Initial gap `x_0 - x_1` (m).
    pub s1_0: f64,
    pub vp: VehicleParams,
    pub gp: GlobalParams,
}

/// Initial configuration class of an admissible follower.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Situation {
    /// At least as fast as the leader, gap at or above the safe distance.
    Faster,
    /// Slower than the leader with at least the steady-state spacing.
    SlowerWide,
    /// Slower than the leader, between the safe distance and the steady-state spacing.
    SlowerNarrow,
    /// Same speed as the leader but closer than the steady-state spacing; the
    /// transition-time bound is undefined here.
    Degenerate,
}

impl ScenarioE1 {
    /// Builds a scenario, checking the general admission conditions: leader and
    /// follower speeds within the band and a gap no smaller than the safe distance.
    pub fn new(v0: f64, v1_0: f64, s1_0: f64, vp: VehicleParams, gp: GlobalParams) -> Result<Self> {
        vp.validate()?;
        gp.validate()?;
        let sc = Self { v0, v1_0, s1_0, vp, gp };
        check(gp.v_min <= v0 && v0 <= gp.v_max, "v0", || {
            format!("leader speed {v0} outside [{}, {}]", gp.v_min, gp.v_max)
        })?;
        check(gp.v_min <= v1_0 && v1_0 <= gp.v_max, "v1_0", || {
            format!("follower speed {v1_0} outside [{}, {}]", gp.v_min, gp.v_max)
        })?;
        check(s1_0 >= sc.safe_gap() - BOUNDARY_TOL, "s1_0", || {
            format!("gap {s1_0} below the safe distance {}", sc.safe_gap())
        })?;
        Ok(sc)
    }

    /// Follower riding exactly on its safe-distance bound at a speed in `[v0, v_max]`.
    pub fn boundary(v0: f64, v1_0: f64, vp: VehicleParams, gp: GlobalParams) -> Result<Self> {
        check(v1_0 >= v0, "v1_0", || format!("follower speed {v1_0} below leader speed {v0}"))?;
        let gap = safe_distance(v1_0, v0, &vp, &gp);
        Self::new(v0, v1_0, gap, vp, gp)
    }

    /// Safe distance at the initial speeds.
    pub fn safe_gap(&self) -> f64 {
        safe_distance(self.v1_0, self.v0, &self.vp, &self.gp)
    }

    /// Steady-state spacing `s0` at the leader speed (safe distance plus margin).
    pub fn steady_spacing(&self) -> f64 {
        desired_spacing(self.v0, self.v0, &self.vp, &self.gp)
    }

    /// Speed excess `v1(0) - v0 = v0 * delta_0`.
    pub fn speed_excess(&self) -> f64 {
        self.v1_0 - self.v0
    }

    /// Relative speed discrepancy `delta_0 = v1(0) / v0 - 1`.
    pub fn discrepancy(&self) -> f64 {
        self.v1_0 / self.v0 - 1.0
    }

    /// Initial spacing offset from the steady state, `s1(0) - s0`.
    pub fn spacing_offset(&self) -> f64 {
        self.s1_0 - self.steady_spacing()
    }

    /// Whether the follower already rides its safe-distance bound at a speed in `[v0, v_max]`.
    pub fn is_boundary(&self) -> bool {
        (self.s1_0 - self.safe_gap()).abs() <= BOUNDARY_TOL && self.v1_0 >= self.v0 && self.v1_0 <= self.gp.v_max
    }

    pub fn situation(&self) -> Situation {
        let s0 = self.steady_spacing();
        if self.v1_0 > self.v0 {
            Situation::Faster
        } else if self.s1_0 >= s0 {
            Situation::SlowerWide
        } else if self.v1_0 < self.v0 {
            Situation::SlowerNarrow
        } else {
            Situation::Degenerate
        }
    }
}

/// The three ceiling terms of the transition-time bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionTerms {
    /// Gap excess over the safe distance at `v_max`, covered at `v_max`.
    pub approach: u64,
    /// Steps of full acceleration up to `v_max`.
    pub accelerate: u64,
    /// Constant-speed hold that opens a narrow gap up to `s0`.
    pub hold: u64,
}

impl TransitionTerms {
    pub fn total(&self) -> u64 {
        self.approach + self.accelerate + self.hold
    }
}

/// Transition-time bound `rho_t` for reaching the boundary-riding state.
pub fn rho_transition(sc: &ScenarioE1) -> Result<TransitionTerms> {
    let (gp, vp) = (&sc.gp, &sc.vp);
    let s0 = sc.steady_spacing();
    let excess = sc.s1_0 - safe_distance(gp.v_max, sc.v0, vp, gp);
    let approach = ceil_steps(excess.max(0.0) / (gp.tau * gp.v_max));
    let accelerate = ceil_steps((gp.v_max - sc.v1_0) / (gp.tau * vp.a_max));
    let hold = match sc.situation() {
        Situation::SlowerNarrow => ceil_steps((s0 - sc.s1_0).max(0.0) / (sc.v0 - sc.v1_0)),
        Situation::Degenerate => return Err(Error::DegenerateRate { deficit: s0 - sc.s1_0 }),
        Situation::Faster | Situation::SlowerWide => 0,
    };
    Ok(TransitionTerms { approach, accelerate, hold })
}

/// Contraction ratios of the speed excess under the shrink law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DCoefficients {
    /// Ratio at the initial discrepancy.
    pub d0: f64,
    /// Ratio in the limit of vanishing discrepancy.
    pub d_inf: f64,
    v0: f64,
    tau: f64,
    a_max: f64,
    a_min: f64,
}

impl DCoefficients {
    pub fn new(v0: f64, delta0: f64, tau: f64, a_max: f64, a_min: f64) -> Self {
        let mut d = Self { d0: 0.0, d_inf: 0.0, v0, tau, a_max, a_min };
        d.d0 = d.at(delta0);
        d.d_inf = d.at(0.0);
        d
    }

    /// `D(delta) = (2 v0 + delta v0 + 2 tau a_max - tau a_min) / (2 v0 + delta v0 + 2 tau a_max - 3 tau a_min)`.
    pub fn at(&self, delta: f64) -> f64 {
        let base = 2.0 * self.v0 + delta * self.v0 + 2.0 * self.tau * self.a_max;
        (base - self.tau * self.a_min) / (base - 3.0 * self.tau * self.a_min)
    }
}

pub fn d_coefficients(sc: &ScenarioE1) -> DCoefficients {
    DCoefficients::new(sc.v0, sc.discrepancy(), sc.gp.tau, sc.vp.a_max, sc.vp.a_min)
}

/// The spacing margin entering the spacing-convergence bound.
///
/// The margin is a length: the amount by which the initial spacing offset
/// `s1(0) - s0` stays below `tau v0 delta_0 / (1 - D_0)`. It enters the
/// logarithm normalised by `tau v0 delta_0`. `Derived` uses the exact margin of
/// the scenario at hand, which is the largest value for which the bound is valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigma {
    Fixed(f64),
    Derived(SigmaDerived),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaDerived {
    Derived,
}

impl Sigma {
    pub const DERIVED: Sigma = Sigma::Derived(SigmaDerived::Derived);

    pub fn is_derived(&self) -> bool {
        matches!(self, Sigma::Derived(_))
    }
}

impl Default for Sigma {
    fn default() -> Self {
        Self::DERIVED
    }
}

/// The spacing-convergence bound evaluated on already normalised inputs:
/// `ceil(log_{d_inf}(1 - 2 (1 - d_inf) / (1 + d_inf) * (1 / (1 - d0) - sigma)))`.
///
/// Returns the step count and the log argument. Arguments at or above one give
/// zero steps; non-positive arguments are out of domain.
pub fn log_bound_steps(d0: f64, d_inf: f64, sigma: f64) -> Result<(u64, f64)> {
    let argument = 1.0 - 2.0 * (1.0 - d_inf) / (1.0 + d_inf) * (1.0 / (1.0 - d0) - sigma);
    if argument.is_nan() || argument <= 0.0 {
        return Err(Error::OutOfDomain { argument });
    }
    if argument >= 1.0 {
        return Ok((0, argument));
    }
    Ok((ceil_steps(argument.ln() / d_inf.ln()), argument))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoOne {
    pub steps: u64,
    pub argument: f64,
    /// Spacing margin used (m).
    pub sigma: f64,
    pub coefficients: DCoefficients,
}

/// Steps for the shrink law to pull the spacing offset down to zero.
pub fn rho_one(sc: &ScenarioE1, sigma: Sigma) -> Result<RhoOne> {
    let coefficients = d_coefficients(sc);
    let excess = sc.speed_excess();
    let offset = sc.spacing_offset();
    if excess <= 0.0 {
        // The law is at its fixed point: the offset never moves.
        let steps = if offset <= 0.0 { 0 } else { return Err(Error::OutOfDomain { argument: 0.0 }) };
        let sigma = match sigma {
            Sigma::Fixed(s) => s,
            Sigma::Derived(_) => -offset,
        };
        return Ok(RhoOne { steps, argument: 1.0, sigma, coefficients });
    }
    let scale = sc.gp.tau * excess;
    let margin = match sigma {
        Sigma::Fixed(s) => s,
        Sigma::Derived(_) => scale / (1.0 - coefficients.d0) - offset,
    };
    let (steps, argument) = log_bound_steps(coefficients.d0, coefficients.d_inf, margin / scale)?;
    Ok(RhoOne { steps, argument, sigma: margin, coefficients })
}

/// Steps of full braking that remove the initial speed excess.
pub fn rho_two(sc: &ScenarioE1) -> u64 {
    ceil_steps(sc.speed_excess().max(0.0) / (-sc.vp.a_min * sc.gp.tau))
}

/// Where a `rho_1` value came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum RhoOneSource {
    Formula { argument: f64 },
    /// The formula was out of domain; the value is the crossing step of a rollout.
    Simulated { argument: f64 },
}

/// Bounds of a single follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleBounds {
    pub rho_t: TransitionTerms,
    pub rho_1: u64,
    pub rho_1_source: RhoOneSource,
    pub rho_2: u64,
    pub rho: u64,
    pub p_e: u64,
}

impl VehicleBounds {
    fn assemble(rho_t: TransitionTerms, rho_1: u64, rho_1_source: RhoOneSource, rho_2: u64) -> Self {
        let rho = rho_1 + rho_2;
        let p_e = rho + rho_t.total();
        Self { rho_t, rho_1, rho_1_source, rho_2, rho, p_e }
    }
}

/// How to react when the spacing-convergence formula is out of domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfDomainPolicy {
    Fail,
    Simulate,
}

/// Bounds for the boundary-riding state reached from `sc`: the transition is
/// computed on `sc`, the convergence terms on the state reached by the transition
/// strategy (the follower keeps its speed excess only if it starts faster than
/// the leader, so the convergence terms are evaluated at `max(v1(0), v0)` on the
/// safe-distance bound).
pub fn vehicle_bounds(sc: &ScenarioE1, sigma: Sigma, policy: OutOfDomainPolicy) -> Result<VehicleBounds> {
    let rho_t = rho_transition(sc)?;
    let boundary = ScenarioE1::boundary(sc.v0, sc.v1_0.max(sc.v0), sc.vp, sc.gp)?;
    let (rho_1, source) = match rho_one(&boundary, sigma) {
        Ok(r) => (r.steps, RhoOneSource::Formula { argument: r.argument }),
        Err(Error::OutOfDomain { argument }) if policy == OutOfDomainPolicy::Simulate => {
            let seq = maneuver::profile_to_zero_spacing(&boundary)?;
            (seq.len() as u64, RhoOneSource::Simulated { argument })
        }
        Err(e) => return Err(e),
    };
    Ok(VehicleBounds::assemble(rho_t, rho_1, source, rho_two(&boundary)))
}

/// Horizon bounds of a platoon, one entry per follower plus aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonBounds {
    pub vehicles: Vec<VehicleBounds>,
    pub p_en_sum: u64,
    pub p_en_max: u64,
}

impl HorizonBounds {
    pub fn from_vehicles(vehicles: Vec<VehicleBounds>) -> Self {
        let p_en_sum = vehicles.iter().map(|b| b.p_e).sum();
        let p_en_max = vehicles.iter().map(|b| b.p_e).max().unwrap_or(0);
        Self { vehicles, p_en_sum, p_en_max }
    }

    /// Bounds of the first follower.
    pub fn first(&self) -> &VehicleBounds {
        &self.vehicles[0]
    }

    pub fn p_ei(&self) -> Vec<u64> {
        self.vehicles.iter().map(|b| b.p_e).collect()
    }
}

/// Per-follower scenarios of a platoon: follower `i` sees the leader speed `v0`,
/// its own initial speed and its initial gap to vehicle `i - 1`.
pub fn platoon_bounds(scenarios: &[ScenarioE1], sigma: Sigma, policy: OutOfDomainPolicy) -> Result<HorizonBounds> {
    let vehicles = scenarios.iter().map(|sc| vehicle_bounds(sc, sigma, policy)).collect::<Result<Vec<_>>>()?;
    Ok(HorizonBounds::from_vehicles(vehicles))
}

/// `ceil(lambda * max + (1 - lambda) * sum)`.
pub fn blended_horizon(hb: &HorizonBounds, lambda: f64) -> u64 {
    assert!((0.0..=1.0).contains(&lambda), "lambda must lie in [0, 1]");
    let p = lambda * hb.p_en_max as f64 + (1.0 - lambda) * hb.p_en_sum as f64;
    ceil_steps(p)
}

/// Largest distance a follower without uncertainty term can cover in `steps`
/// steps from speed `v_init`, respecting its acceleration limits, the speed cap
/// and a final speed no higher than `v_end`. `None` when braking cannot reach
/// `v_end` in time.
pub fn max_advance(v_init: f64, steps: usize, v_end: f64, vp: &VehicleParams, gp: &GlobalParams) -> Option<f64> {
    let tau = gp.tau;
    let cap = |p: usize| {
        (v_init + p as f64 * tau * vp.a_max).min(gp.v_max).min(v_end + (steps - p) as f64 * tau * -vp.a_min)
    };
    if cap(0) < v_init - 1e-12 {
        return None;
    }
    let mut v = v_init;
    let mut advance = 0.0;
    for p in 1..=steps {
        let next = cap(p);
        advance += 0.5 * tau * (v + next);
        v = next;
    }
    Some(advance)
}

/// Fewest prediction steps for which the terminal boxes are reachable at all
/// behind a leader at constant speed. Follower `i` must close its distance to the
/// leader down to the largest terminal spacings of vehicles `1..=i` while ending
/// within `i` speed tolerances of the leader speed. Necessary, not sufficient;
/// valid without uncertainty term.
pub fn terminal_horizon_floor(
    platoon: &crate::dynamics::PlatoonState,
    vps: &[VehicleParams],
    gp: &GlobalParams,
    zeta_x: f64,
    zeta_v: f64,
    cap: usize,
) -> Option<usize> {
    let v0 = platoon.leader.v;
    let reachable = |horizon: usize| {
        let mut allowed = 0.0;
        platoon.cavs.iter().zip(vps).enumerate().all(|(i, (cav, vp))| {
            let j = (i + 1) as f64;
            let v_end = (v0 + j * zeta_v).min(gp.v_max);
            allowed += vp.length + gp.delta1 * gp.tau * v_end + gp.delta2 * gp.tau * zeta_v + gp.delta_margin + zeta_x;
            max_advance(cav.v, horizon, v_end, vp, gp).is_some_and(|adv| {
                platoon.leader.x + horizon as f64 * gp.tau * v0 - cav.x - adv <= allowed
            })
        })
    };
    (1..=cap).find(|&h| reachable(h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vp() -> VehicleParams {
        VehicleParams { a_min: -5.0, a_max: 3.0, eps: 0.0, eta: 0.0, length: 5.0 }
    }

    fn gp() -> GlobalParams {
        GlobalParams { tau: 0.1, v_min: 0.0, v_max: 20.0, delta1: 39.0, delta2: 0.5, delta_margin: 2.0 }
    }

    #[test]
    fn ceil_steps_absorbs_representation_error() {
        assert_eq!(ceil_steps(4.0 + 4e-15), 4);
        assert_eq!(ceil_steps(4.001), 5);
        assert_eq!(ceil_steps(0.0), 0);
        assert_eq!(ceil_steps(-3.0), 0);
        assert_eq!(ceil_steps(f64::NAN), 0);
    }

    #[test]
    fn transition_zero_when_already_at_vmax_on_bound() {
        let sc = ScenarioE1::boundary(10.0, 20.0, vp(), gp()).unwrap();
        let t = rho_transition(&sc).unwrap();
        assert_eq!(t.total(), 0);
    }

    #[test]
    fn transition_terms_example() {
        let g = GlobalParams { tau: 0.1, ..gp() };
        let v = VehicleParams { a_max: 3.0, ..vp() };
        let s0 = desired_spacing(10.0, 10.0, &v, &g);
        let sc = ScenarioE1::new(10.0, 8.0, s0 + 5.0, v, g).unwrap();
        let t = rho_transition(&sc).unwrap();
        assert_eq!(t.hold, 0);
        assert_eq!(t.accelerate, 40);
        let excess = s0 + 5.0 - safe_distance(20.0, 10.0, &v, &g);
        assert_eq!(t.approach, ceil_steps(excess.max(0.0) / 2.0));

        let sc = ScenarioE1::new(10.0, 9.0, s0 - 1.0, v, g).unwrap();
        assert_eq!(sc.situation(), Situation::SlowerNarrow);
        assert_eq!(rho_transition(&sc).unwrap().hold, 1);
    }

    #[test]
    fn equal_speeds_inside_steady_spacing_is_degenerate() {
        let sc = ScenarioE1::boundary(10.0, 10.0, vp(), gp()).unwrap();
        assert_eq!(sc.situation(), Situation::Degenerate);
        assert!(matches!(rho_transition(&sc), Err(Error::DegenerateRate { .. })));
        let g0 = GlobalParams { delta_margin: 0.0, ..gp() };
        let sc = ScenarioE1::boundary(10.0, 10.0, vp(), g0).unwrap();
        assert_eq!(sc.situation(), Situation::SlowerWide);
        assert!(rho_transition(&sc).is_ok());
    }

    #[test]
    fn admission_is_checked() {
        assert!(ScenarioE1::new(10.0, 21.0, 100.0, vp(), gp()).is_err());
        assert!(ScenarioE1::new(10.0, 12.0, 1.0, vp(), gp()).is_err());
    }

    #[test]
    fn d_coefficient_values() {
        let g = GlobalParams { tau: 0.1, ..gp() };
        let d = DCoefficients::new(10.0, 0.0, g.tau, 3.0, -5.0);
        assert_relative_eq!(d.d_inf, 21.1 / 22.1, max_relative = 1e-14);
        assert_eq!(d.d0, d.d_inf);
        let near_zero = DCoefficients::new(10.0, 0.0, 0.1, 3.0, -1e-9);
        assert_relative_eq!(near_zero.d_inf, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn d_increases_with_discrepancy() {
        let d = DCoefficients::new(10.0, 0.5, 0.1, 3.0, -5.0);
        let mut last = d.at(0.0);
        for j in 1..=50 {
            let next = d.at(j as f64 * 0.02);
            assert!(next > last);
            assert!(next < 1.0);
            last = next;
        }
    }

    #[test]
    fn log_bound_examples() {
        let d = 21.1 / 22.1;
        assert_eq!(log_bound_steps(d, d, 1.0 / (1.0 - d)).unwrap().0, 0);
        // independent evaluation
        let (d_inf, d0, sigma): (f64, f64, f64) = (0.9548, 0.95, 15.0);
        let arg = 1.0 - 2.0 * (1.0 - d_inf) / (1.0 + d_inf) * (1.0 / (1.0 - d0) - sigma);
        let expect = (arg.ln() / d_inf.ln()).ceil() as u64;
        assert_eq!(expect, 6);
        assert_eq!(log_bound_steps(d0, d_inf, sigma).unwrap().0, 6);
        assert!(matches!(log_bound_steps(d0, d_inf, -100.0), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn rho_two_examples() {
        let sc = ScenarioE1::boundary(10.0, 12.0, vp(), gp()).unwrap();
        assert_eq!(rho_two(&sc), 4);
        let sc = ScenarioE1::boundary(10.0, 10.0, vp(), gp()).unwrap();
        assert_eq!(rho_two(&sc), 0);
        let sc = ScenarioE1::boundary(10.0, 10.5, vp(), gp()).unwrap();
        assert_eq!(rho_two(&sc), 1);
    }

    #[test]
    fn rho_two_monotone() {
        let mut last = 0;
        for j in 0..=100 {
            let sc = ScenarioE1::boundary(10.0, 10.0 + 0.1 * j as f64, vp(), gp()).unwrap();
            let r = rho_two(&sc);
            assert!(r >= last);
            last = r;
        }
        let sc = |a_min: f64| ScenarioE1::boundary(10.0, 15.0, VehicleParams { a_min, ..vp() }, gp()).unwrap();
        assert!(rho_two(&sc(-8.0)) <= rho_two(&sc(-5.0)));
    }

    #[test]
    fn blended_horizon_examples() {
        let b = |p_e| VehicleBounds::assemble(
            TransitionTerms { approach: 0, accelerate: p_e, hold: 0 },
            0,
            RhoOneSource::Formula { argument: 1.0 },
            0,
        );
        let hb = HorizonBounds::from_vehicles(vec![b(12), b(10), b(18)]);
        assert_eq!(hb.p_en_sum, 40);
        assert_eq!(hb.p_en_max, 18);
        assert_eq!(blended_horizon(&hb, 0.0), 40);
        assert_eq!(blended_horizon(&hb, 1.0), 18);
        let hb = HorizonBounds { vehicles: vec![], p_en_sum: 40, p_en_max: 12 };
        assert_eq!(blended_horizon(&hb, 0.5), 26);
    }

    #[test]
    fn max_advance_profiles() {
        let g = GlobalParams { tau: 1.0, ..gp() };
        // 10 -> 13 -> 16 -> 19 -> 20 then cruise
        assert_eq!(max_advance(10.0, 5, 20.0, &vp(), &g), Some(11.5 + 14.5 + 17.5 + 19.5 + 20.0));
        // must end at 10: 10 -> 13 -> 15 -> 10
        assert_eq!(max_advance(10.0, 3, 10.0, &vp(), &g), Some(11.5 + 14.0 + 12.5));
        assert_eq!(max_advance(20.0, 1, 10.0, &vp(), &g), None);
    }

    #[test]
    fn sigma_parses_number_or_keyword() {
        let s: Sigma = serde_json::from_str("2.5").unwrap();
        assert_eq!(s, Sigma::Fixed(2.5));
        let s: Sigma = serde_json::from_str("\"derived\"").unwrap();
        assert!(s.is_derived());
    }
}
