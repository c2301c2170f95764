//! Open-loop control sequences for a single follower behind a constant-speed
//! leader: the transition strategy that reaches the safe-distance bound, the
//! geometric shrink law, full braking, and the blend of the last two that lands
//! on zero spacing and speed error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{control_for_accel, spacing_error, speed_target_control, step_cav, step_leader, PlatoonState, VehicleState};
use crate::error::{Error, Result};
use crate::feasibility::{feasible_interval, g_slack, step_platoon_with, FeasibleInterval, Predecessor};
use crate::horizon::{self, ScenarioE1, Sigma, BOUNDARY_TOL};
use crate::params::{GlobalParams, VehicleParams};
use crate::qp::{self, QpProblem, QpSettings, QpStatus};
use crate::sim::trace::{StepRecord, Trace};

/// Step cap of every open-ended rollout.
pub const MAX_STEPS: usize = 100_000;

/// Membership tolerance when validating a sequence against its rollout.
pub const SEQUENCE_TOL: f64 = 1e-7;

/// Leader and follower at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairState {
    pub leader: VehicleState,
    pub cav: VehicleState,
}

impl PairState {
    /// Leader at `s1(0)`, follower at the origin, both without control history.
    pub fn initial(sc: &ScenarioE1) -> Self {
        Self { leader: VehicleState::new(sc.s1_0, sc.v0, 0.0), cav: VehicleState::new(0.0, sc.v1_0, 0.0) }
    }

    pub fn gap(&self) -> f64 {
        self.leader.x - self.cav.x
    }

    /// Gap minus the steady-state spacing at the leader speed.
    pub fn spacing_offset(&self, sc: &ScenarioE1) -> f64 {
        self.gap() - sc.steady_spacing()
    }

    /// Leader speed minus follower speed.
    pub fn speed_error(&self) -> f64 {
        self.leader.v - self.cav.v
    }

    pub fn slack(&self, sc: &ScenarioE1) -> f64 {
        g_slack(&self.leader, &self.cav, &sc.vp, &sc.gp)
    }

    pub fn interval(&self, sc: &ScenarioE1) -> FeasibleInterval {
        feasible_interval(Some(&Predecessor::new(self.leader, 0.0)), &self.cav, &sc.vp, &sc.gp)
    }

    pub fn advance(&self, sc: &ScenarioE1, u: f64) -> Self {
        Self { leader: step_leader(&self.leader, 0.0, &sc.gp), cav: step_cav(&self.cav, u, &sc.vp, &sc.gp) }
    }

    /// On the safe-distance bound at a speed in `[v0, v_max]`.
    pub fn on_boundary(&self, sc: &ScenarioE1) -> bool {
        self.slack(sc).abs() <= BOUNDARY_TOL && self.cav.v >= sc.v0 - 1e-9 && self.cav.v <= sc.gp.v_max + 1e-9
    }

    /// Relative speed discrepancy of the follower.
    pub fn discrepancy(&self, sc: &ScenarioE1) -> f64 {
        self.cav.v / sc.v0 - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Upper end of the feasible interval, after an optional constant-speed hold.
    MaxFeasible,
    Shrink,
    Brake,
    Blended,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub strategy: Strategy,
    /// Leading constant-speed steps.
    pub hold_steps: usize,
    /// Steps where the law's value exceeded the feasible interval and was clamped.
    pub clamped_steps: usize,
    /// Continuous switch parameter of a blended profile.
    pub switch: Option<f64>,
}

impl SequenceMeta {
    pub fn new(strategy: Strategy) -> Self {
        Self { strategy, hold_steps: 0, clamped_steps: 0, switch: None }
    }
}

/// Trajectory of a sequence: `states[p]` is the state before control `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub states: Vec<PairState>,
    pub intervals: Vec<FeasibleInterval>,
}

impl Rollout {
    pub fn last(&self) -> &PairState {
        self.states.last().expect("rollout has an initial state")
    }
}

pub fn rollout(sc: &ScenarioE1, controls: &[f64]) -> Rollout {
    let mut s = PairState::initial(sc);
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut intervals = Vec::with_capacity(controls.len());
    states.push(s);
    for &u in controls {
        intervals.push(s.interval(sc));
        s = s.advance(sc, u);
        states.push(s);
    }
    Rollout { states, intervals }
}

/// A control sequence whose every element lies in the feasible interval of its step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence {
    pub controls: Vec<f64>,
    pub meta: SequenceMeta,
}

impl ControlSequence {
    pub fn new(sc: &ScenarioE1, controls: Vec<f64>, meta: SequenceMeta) -> Result<Self> {
        let r = rollout(sc, &controls);
        for (step, (&u, iv)) in controls.iter().zip(&r.intervals).enumerate() {
            if !iv.contains_within(u, SEQUENCE_TOL) {
                return Err(Error::Infeasible { step, control: u, lo: iv.lo, hi: iv.hi });
            }
        }
        Ok(Self { controls, meta })
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn rollout(&self, sc: &ScenarioE1) -> Rollout {
        rollout(sc, &self.controls)
    }
}

/// Steps of constant speed that open a gap narrower than the steady-state spacing
/// up to it, for a follower slower than the leader.
pub fn hold_steps(sc: &ScenarioE1) -> usize {
    let deficit = sc.steady_spacing() - sc.s1_0;
    if sc.v1_0 < sc.v0 && deficit > 0.0 {
        horizon::ceil_steps(deficit / (sc.gp.tau * (sc.v0 - sc.v1_0))) as usize
    } else {
        0
    }
}

/// Transition strategy: hold speed while a narrow gap opens, then apply the
/// upper end of the feasible interval each step (full acceleration, then holding
/// `v_max`, then landing on the safe-distance bound) until the follower rides
/// the bound at a speed no lower than the leader's.
pub fn strategy_s1(sc: &ScenarioE1) -> Result<ControlSequence> {
    let mut s = PairState::initial(sc);
    let mut controls = Vec::new();
    let hold = hold_steps(sc);
    for _ in 0..hold {
        let u = speed_target_control(&s.cav, sc.v1_0, &sc.vp, &sc.gp);
        controls.push(u);
        s = s.advance(sc, u);
    }
    while !s.on_boundary(sc) {
        if controls.len() >= MAX_STEPS {
            return Err(Error::NoConvergence { steps: MAX_STEPS });
        }
        let u = s.interval(sc).hi;
        controls.push(u);
        s = s.advance(sc, u);
    }
    ControlSequence::new(sc, controls, SequenceMeta { hold_steps: hold, ..SequenceMeta::new(Strategy::MaxFeasible) })
}

/// Acceleration of the shrink law at relative discrepancy `delta_p`:
/// `v0 delta_p 2 a_min / (tau (2 v0 / tau + delta_p v0 / tau + 2 a_max - 3 a_min))`.
pub fn shrink_law(sc: &ScenarioE1, delta_p: f64) -> f64 {
    let (v0, tau, a_max, a_min) = (sc.v0, sc.gp.tau, sc.vp.a_max, sc.vp.a_min);
    v0 * delta_p * 2.0 * a_min / (tau * (2.0 * v0 / tau + delta_p * v0 / tau + 2.0 * a_max - 3.0 * a_min))
}

/// Shrink-law control at `s`, clamped into the feasible interval. The flag is set
/// when the clamp was active.
pub fn shrink_control(sc: &ScenarioE1, s: &PairState) -> (f64, bool) {
    let iv = s.interval(sc);
    let u = control_for_accel(&s.cav, shrink_law(sc, s.discrepancy(sc)), &sc.vp);
    let c = iv.clamp(u);
    (c, (c - u).abs() > 1e-12)
}

/// Full braking towards the leader speed, landing exactly on it; afterwards the
/// control holds the leader speed.
pub fn brake_control(sc: &ScenarioE1, s: &PairState) -> f64 {
    let iv = s.interval(sc);
    iv.clamp(sc.vp.a_min.max(speed_target_control(&s.cav, sc.v0, &sc.vp, &sc.gp)))
}

fn require_boundary(sc: &ScenarioE1) -> Result<()> {
    if sc.is_boundary() {
        Ok(())
    } else {
        Err(Error::NotApplicable("follower is not riding its safe-distance bound at or above the leader speed".into()))
    }
}

/// Shrink law applied until the spacing offset first reaches zero or below.
pub fn profile_to_zero_spacing(sc: &ScenarioE1) -> Result<ControlSequence> {
    require_boundary(sc)?;
    let mut s = PairState::initial(sc);
    let mut controls = Vec::new();
    let mut meta = SequenceMeta::new(Strategy::Shrink);
    while s.spacing_offset(sc) > 0.0 {
        // The excess decays geometrically; once it is gone the offset is frozen.
        if controls.len() >= MAX_STEPS || s.cav.v <= sc.v0 + 1e-12 {
            return Err(Error::NoConvergence { steps: controls.len() });
        }
        let (u, clamped) = shrink_control(sc, &s);
        meta.clamped_steps += usize::from(clamped);
        controls.push(u);
        s = s.advance(sc, u);
    }
    ControlSequence::new(sc, controls, meta)
}

/// Full braking until the speed excess is gone.
pub fn profile_brake(sc: &ScenarioE1) -> Result<ControlSequence> {
    require_boundary(sc)?;
    if sc.speed_excess() <= 0.0 {
        return Err(Error::NotApplicable("no speed excess to remove".into()));
    }
    let mut s = PairState::initial(sc);
    let mut controls = Vec::new();
    while s.cav.v > sc.v0 + 1e-9 {
        if controls.len() >= MAX_STEPS {
            return Err(Error::NoConvergence { steps: MAX_STEPS });
        }
        let u = brake_control(sc, &s);
        controls.push(u);
        s = s.advance(sc, u);
    }
    ControlSequence::new(sc, controls, SequenceMeta::new(Strategy::Brake))
}

/// Terminal tolerances of the blended profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub spacing: f64,
    pub speed: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { spacing: 1e-3, speed: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendedProfile {
    pub sequence: ControlSequence,
    /// Shrink steps (integer part) and blend weight (fractional part) of the switch step.
    pub switch: f64,
    pub rho_1: u64,
    pub rho_2: u64,
    pub terminal_spacing: f64,
    pub terminal_speed: f64,
    /// Terminal spacing offset of pure braking followed by holding.
    pub brake_end: f64,
    /// Terminal spacing offset of the shrink law followed by braking, at the largest switch.
    pub shrink_end: f64,
}

/// Family of profiles indexed by the switch `theta`: `floor(theta)` shrink steps,
/// one step blending shrink and brake with weight `frac(theta)`, then braking and
/// holding. Terminal offset after `len` steps is non-increasing in `theta`.
pub fn switched_controls(sc: &ScenarioE1, theta: f64, len: usize) -> (Vec<f64>, PairState, usize) {
    let whole = theta.floor() as usize;
    let frac = theta - theta.floor();
    let mut s = PairState::initial(sc);
    let mut controls = Vec::with_capacity(len);
    let mut clamped = 0;
    for p in 0..len {
        let u = if p < whole {
            let (u, c) = shrink_control(sc, &s);
            clamped += usize::from(c);
            u
        } else if p == whole && frac > 0.0 {
            let (u, c) = shrink_control(sc, &s);
            clamped += usize::from(c);
            frac * u + (1.0 - frac) * brake_control(sc, &s)
        } else {
            brake_control(sc, &s)
        };
        controls.push(u);
        s = s.advance(sc, u);
    }
    (controls, s, clamped)
}

/// Profile of exactly `rho_1 + rho_2` steps ending at zero spacing and speed error.
///
/// `rho_1` comes from the bound formula, or from the shrink rollout when the
/// formula is out of domain. The switch is found by bisection on the terminal
/// spacing offset.
pub fn blended_profile(sc: &ScenarioE1, sigma: Sigma, tol: Tolerance) -> Result<BlendedProfile> {
    require_boundary(sc)?;
    let shrink = profile_to_zero_spacing(sc)?;
    let crossing = shrink.len() as u64;
    let rho_1 = match horizon::rho_one(sc, sigma) {
        Ok(r) => r.steps,
        Err(Error::OutOfDomain { .. }) => crossing,
        Err(e) => return Err(e),
    };
    let rho_2 = horizon::rho_two(sc);
    let len = (rho_1 + rho_2) as usize;
    let theta_max = rho_1.min(crossing) as f64;
    let end = |theta: f64| switched_controls(sc, theta, len).1.spacing_offset(sc);

    let brake_end = end(0.0);
    let shrink_end = end(theta_max);
    let mut theta = if brake_end.abs() <= tol.spacing {
        0.0
    } else if brake_end < 0.0 || shrink_end > tol.spacing {
        return Err(Error::NoSolution { low_end: brake_end, high_end: shrink_end });
    } else if shrink_end.abs() <= tol.spacing {
        theta_max
    } else {
        let (mut lo, mut hi) = (0.0, theta_max);
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..200 {
            mid = 0.5 * (lo + hi);
            let h = end(mid);
            if h.abs() <= tol.spacing {
                break;
            }
            if h > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        mid
    };
    if !theta.is_finite() {
        theta = 0.0;
    }
    let (controls, last, clamped) = switched_controls(sc, theta, len);
    let meta = SequenceMeta { clamped_steps: clamped, switch: Some(theta), ..SequenceMeta::new(Strategy::Blended) };
    let sequence = ControlSequence::new(sc, controls, meta)?;
    Ok(BlendedProfile {
        sequence,
        switch: theta,
        rho_1,
        rho_2,
        terminal_spacing: last.spacing_offset(sc),
        terminal_speed: last.speed_error(),
        brake_end,
        shrink_end,
    })
}

/// Outcome of the exact reachability test of [`boundary_reachable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reachability {
    pub steps: usize,
    /// False only when backed by a certificate.
    pub reachable: bool,
    /// Gap of the Farkas certificate when unreachable.
    pub certificate_gap: Option<f64>,
    /// Normalised residual `|A' y|` of that certificate.
    pub certificate_residual: Option<f64>,
}

/// Whether any control sequence of exactly `steps` steps that respects the
/// acceleration limits, the speed band and the safe distance at every step can
/// end on the safe-distance bound (within [`BOUNDARY_TOL`]) at a speed no lower
/// than the leader's. Decided by a feasibility QP over the controls; a negative
/// answer carries a Farkas certificate.
pub fn boundary_reachable(sc: &ScenarioE1, steps: usize) -> Result<Reachability> {
    let init = PairState::initial(sc);
    if steps == 0 {
        return Ok(Reachability { steps, reachable: init.on_boundary(sc), certificate_gap: None, certificate_residual: None });
    }
    let (vp, gp) = (&sc.vp, &sc.gp);
    let tau = gp.tau;
    // Position, speed and previous control as affine functions of the controls.
    let zero = DVector::<f64>::zeros(steps);
    let (mut x, mut v, mut up) = ((init.cav.x, zero.clone()), (init.cav.v, zero.clone()), (0.0, zero.clone()));
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let unit = |p: usize| {
        let mut e = DVector::zeros(steps);
        e[p] = 1.0;
        e
    };
    for p in 0..steps {
        rows.push((unit(p), vp.a_min));
        rows.push((-unit(p), -vp.a_max));
        // Realised acceleration (1 - eta) u - eps v + eta u_prev.
        let acc = (-vp.eps * v.0 + vp.eta * up.0, unit(p) * (1.0 - vp.eta) - &v.1 * vp.eps + &up.1 * vp.eta);
        x = (x.0 + tau * v.0 + 0.5 * tau * tau * acc.0, &x.1 + &v.1 * tau + &acc.1 * (0.5 * tau * tau));
        v = (v.0 + tau * acc.0, &v.1 + &acc.1 * tau);
        up = (0.0, unit(p));
        rows.push((v.1.clone(), gp.v_min - v.0));
        rows.push((-&v.1, v.0 - gp.v_max));
        // Gap slack: leader - x - L - (d1 + d2) tau v + d2 tau v0.
        let lead = sc.s1_0 + (p + 1) as f64 * tau * sc.v0;
        let k = (gp.delta1 + gp.delta2) * tau;
        let g0 = lead - x.0 - vp.length - k * v.0 + gp.delta2 * tau * sc.v0;
        let g1 = -&x.1 - &v.1 * k;
        rows.push((g1.clone(), -g0));
        if p + 1 == steps {
            rows.push((-g1, g0 - BOUNDARY_TOL));
            rows.push((v.1.clone(), sc.v0 - v.0));
        }
    }
    let a = DMatrix::from_fn(rows.len(), steps, |r, c| rows[r].0[c]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let problem = QpProblem::new(DMatrix::identity(steps, steps), zero, a, b)?;
    let sol = qp::solve(&problem, &QpSettings::default(), None);
    Ok(match &sol.status {
        QpStatus::Infeasible { certificate } => {
            let (residual, gap) = certificate.check(&problem);
            Reachability { steps, reachable: false, certificate_gap: Some(gap), certificate_residual: Some(residual) }
        }
        _ => Reachability { steps, reachable: true, certificate_gap: None, certificate_residual: None },
    })
}

/// Trace of a single-follower sequence, with the leader as vehicle 0.
pub fn sequence_trace(sc: &ScenarioE1, seq: &ControlSequence, label: &str) -> Result<Trace> {
    let to_platoon = |p: &PairState, k: usize| PlatoonState { leader: p.leader, cavs: vec![p.cav], step: k as i64 };
    let r = seq.rollout(sc);
    let mut trace = Trace::new(to_platoon(&r.states[0], 0), vec![sc.vp], sc.gp);
    for (k, &u) in seq.controls.iter().enumerate() {
        let record = StepRecord { controls: vec![u], leader_accel: 0.0, status: label.into(), objective: None, fallback: false };
        trace.push(record, to_platoon(&r.states[k + 1], k + 1));
    }
    Ok(trace)
}

/// Closed-loop pole of the closing feedback.
pub const CLOSING_POLE: f64 = 0.5;

/// Speed mismatch to the leader below which a predecessor counts as settled.
pub const PREDECESSOR_SPEED_TOL: f64 = 1e-9;

/// Acceleration of a linear feedback on the spacing and speed errors of `cav`
/// behind a constant-speed `lead`, placing both closed-loop poles at
/// [`CLOSING_POLE`]. The spacing error reacts to an acceleration through the
/// travelled distance and through the speed terms of the desired spacing.
pub fn closing_accel(lead: &VehicleState, cav: &VehicleState, vp: &VehicleParams, gp: &GlobalParams) -> f64 {
    let tau = gp.tau;
    let z = spacing_error(lead, cav, vp, gp);
    let z_speed = lead.v - cav.v;
    let gain_in_spacing = tau * tau * (0.5 + gp.delta1 + gp.delta2);
    let k_spacing = (1.0 - CLOSING_POLE).powi(2) / (tau * tau);
    let k_speed = (2.0 - 2.0 * CLOSING_POLE - gain_in_spacing * k_spacing) / tau;
    k_spacing * z + k_speed * z_speed
}

/// Vehicle-by-vehicle run of the platoon strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialRun {
    pub trace: Trace,
    /// Steps spent on each follower's maneuver, closing phase included.
    pub phase_steps: Vec<usize>,
    /// Closing-feedback steps of each follower.
    pub closing_steps: Vec<usize>,
    /// Followers whose transition or landing profile was unavailable, so the
    /// closing feedback took over.
    pub landing_fallbacks: usize,
    /// Planned controls that had to be moved into the realised feasible interval.
    pub adjusted_steps: usize,
    pub max_adjustment: f64,
}

impl SequentialRun {
    pub fn total_steps(&self) -> usize {
        self.phase_steps.iter().sum()
    }
}

/// Steers the followers to the steady state one at a time, front to rear.
///
/// While follower `i` runs its single-follower plan (transition onto the
/// safe-distance bound, then the blended profile), every other follower steers
/// towards the leader speed, clamped into its feasible interval. The plan of follower `i` assumes its
/// predecessor already drives at the leader speed. Whatever error remains, for
/// instance when the landing profile has no bracketed switch, is removed by
/// [`closing_accel`] clamped into the feasible interval.
#[allow(clippy::needless_range_loop)] // follower index addresses the state and the parameters
pub fn sequential_strategy(
    initial: &PlatoonState,
    vps: &[VehicleParams],
    gp: &GlobalParams,
    sigma: Sigma,
    tol: Tolerance,
) -> Result<SequentialRun> {
    let v0 = initial.leader.v;
    let mut state = initial.clone();
    let mut trace = Trace::new(initial.clone(), vps.to_vec(), *gp);
    let mut phase_steps = Vec::with_capacity(initial.len());
    let mut closing_steps = Vec::with_capacity(initial.len());
    let (mut adjusted_steps, mut max_adjustment, mut landing_fallbacks) = (0, 0.0_f64, 0);
    let mut advance = |state: &PlatoonState, i: usize, own_control: &dyn Fn(&PlatoonState) -> f64| {
        let u_i = own_control(state);
        let env = step_platoon_with(state, 0.0, vps, gp, |j, iv| {
            let own = &state.cavs[j];
            if j == i {
                iv.clamp(u_i)
            } else {
                iv.clamp(speed_target_control(own, v0, &vps[j], gp))
            }
        });
        let next = env.next.clone();
        let record = StepRecord { controls: env.controls.clone(), leader_accel: 0.0, status: "sequential".into(), objective: None, fallback: false };
        trace.push(record, env.next);
        (next, env.controls[i] - u_i)
    };
    for i in 0..initial.len() {
        // The predecessor left its own closing phase within the speed tolerance;
        // let it reach the leader speed while follower `i` holds its speed.
        let mut settle = 0;
        while (state.vehicle(i).v - v0).abs() > PREDECESSOR_SPEED_TOL {
            if settle == MAX_STEPS {
                return Err(Error::NoConvergence { steps: MAX_STEPS });
            }
            let hold = |st: &PlatoonState| speed_target_control(&st.cavs[i], st.cavs[i].v, &vps[i], gp);
            state = advance(&state, i, &hold).0;
            settle += 1;
        }
        let settled = |st: &PlatoonState| {
            let (lead, cav) = (st.vehicle(i), st.vehicle(i + 1));
            spacing_error(lead, cav, &vps[i], gp).abs() <= tol.spacing && (lead.v - cav.v).abs() <= tol.speed
        };
        if settled(&state) {
            phase_steps.push(settle);
            closing_steps.push(0);
            continue;
        }
        let lead = *state.vehicle(i);
        let cav = state.cavs[i];
        let sc = ScenarioE1::new(v0, cav.v, lead.x - cav.x, vps[i], *gp)?;
        let recoverable = |e: &Error| matches!(e, Error::NoSolution { .. } | Error::NoConvergence { .. } | Error::OutOfDomain { .. });
        let mut plan = Vec::new();
        match strategy_s1(&sc) {
            Ok(s1) => {
                let reached = s1.rollout(&sc).last().cav.v;
                let landing = ScenarioE1::boundary(v0, reached.max(v0), vps[i], *gp)?;
                plan.extend(&s1.controls);
                match blended_profile(&landing, sigma, tol) {
                    Ok(b) => plan.extend(&b.sequence.controls),
                    Err(e) if recoverable(&e) => landing_fallbacks += 1,
                    Err(e) => return Err(e),
                }
            }
            Err(e) if recoverable(&e) => landing_fallbacks += 1,
            Err(e) => return Err(e),
        }
        for &planned in &plan {
            let (next, shift) = advance(&state, i, &|_| planned);
            if shift.abs() > SEQUENCE_TOL {
                adjusted_steps += 1;
            }
            max_adjustment = max_adjustment.max(shift.abs());
            state = next;
        }
        let mut closing = 0;
        while !settled(&state) {
            if closing == MAX_STEPS {
                return Err(Error::NoConvergence { steps: MAX_STEPS });
            }
            let law = |st: &PlatoonState| {
                let cav = st.vehicle(i + 1);
                control_for_accel(cav, closing_accel(st.vehicle(i), cav, &vps[i], gp), &vps[i])
            };
            state = advance(&state, i, &law).0;
            closing += 1;
        }
        phase_steps.push(settle + plan.len() + closing);
        closing_steps.push(closing);
    }
    Ok(SequentialRun { trace, phase_steps, closing_steps, landing_fallbacks, adjusted_steps, max_adjustment })
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
    fn shrink_law_value() {
        let sc = ScenarioE1::boundary(10.0, 12.0, vp(), gp()).unwrap();
        assert_relative_eq!(shrink_law(&sc, 0.2), -20.0 / 24.1, max_relative = 1e-14);
        assert_eq!(shrink_law(&sc, 0.0), 0.0);
    }

    #[test]
    fn shrink_law_matches_contraction_form() {
        let sc = ScenarioE1::boundary(10.0, 12.0, vp(), gp()).unwrap();
        let d = horizon::d_coefficients(&sc);
        for j in 0..20 {
            let delta = j as f64 * 0.05;
            let expect = sc.v0 * delta / sc.gp.tau * (d.at(delta) - 1.0);
            assert_relative_eq!(shrink_law(&sc, delta), expect, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn s1_already_on_boundary_is_empty() {
        let sc = ScenarioE1::boundary(10.0, 12.0, vp(), gp()).unwrap();
        assert!(strategy_s1(&sc).unwrap().is_empty());
    }

    #[test]
    fn s1_reaches_boundary() {
        let sc = ScenarioE1::new(10.0, 8.0, 150.0, vp(), gp()).unwrap();
        let seq = strategy_s1(&sc).unwrap();
        assert!(seq.rollout(&sc).last().on_boundary(&sc));
    }

    #[test]
    fn brake_length_is_rho_two() {
        let sc = ScenarioE1::boundary(10.0, 12.0, vp(), gp()).unwrap();
        let seq = profile_brake(&sc).unwrap();
        assert_eq!(seq.len(), 4);
        assert!(seq.controls.iter().all(|&u| u == -5.0));
        let sc = ScenarioE1::boundary(10.0, 10.0, vp(), gp()).unwrap();
        assert!(matches!(profile_brake(&sc), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn off_boundary_is_not_applicable() {
        let sc = ScenarioE1::new(10.0, 12.0, 200.0, vp(), gp()).unwrap();
        assert!(matches!(profile_to_zero_spacing(&sc), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn sequence_rejects_infeasible_control() {
        let sc = ScenarioE1::boundary(10.0, 12.0, vp(), gp()).unwrap();
        let err = ControlSequence::new(&sc, vec![3.0], SequenceMeta::new(Strategy::Custom)).unwrap_err();
        assert!(matches!(err, Error::Infeasible { step: 0, .. }));
    }

    #[test]
    fn shrink_stalls_when_excess_cannot_cover_offset() {
        let sc = ScenarioE1::boundary(10.0, 12.0, vp(), gp()).unwrap();
        assert!(matches!(profile_to_zero_spacing(&sc), Err(Error::NoConvergence { .. })));
        assert!(matches!(horizon::rho_one(&sc, Sigma::DERIVED), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn blended_profile_lands() {
        let sc = ScenarioE1::boundary(10.0, 11.0, vp(), gp()).unwrap();
        let tol = Tolerance::default();
        let b = blended_profile(&sc, Sigma::DERIVED, tol).unwrap();
        assert!(b.terminal_spacing.abs() <= tol.spacing, "{b:?}");
        assert!(b.terminal_speed.abs() <= tol.speed);
        assert_eq!(b.sequence.len() as u64, b.rho_1 + b.rho_2);
    }

    #[test]
    fn reachability_matches_transition() {
        let sc = ScenarioE1::new(10.0, 8.0, 150.0, vp(), gp()).unwrap();
        let n = strategy_s1(&sc).unwrap().len();
        assert!(boundary_reachable(&sc, n).unwrap().reachable);
        let r = boundary_reachable(&sc, 3).unwrap();
        assert!(!r.reachable);
        assert!(r.certificate_gap.unwrap() > 0.0 && r.certificate_residual.unwrap() < 1e-9);
        let on = ScenarioE1::boundary(10.0, 12.0, vp(), gp()).unwrap();
        assert!(boundary_reachable(&on, 0).unwrap().reachable);
    }

    #[test]
    fn sequential_strategy_settles_platoon() {
        let g = GlobalParams { tau: 1.0, delta1: 3.0, ..gp() };
        let v = VehicleParams { a_max: 2.5, ..vp() };
        let leader = VehicleState::new(0.0, 18.0, 0.0);
        let c1 = VehicleState::new(-60.0, 12.0, 0.0);
        let c2 = VehicleState::new(-140.0, 15.0, 0.0);
        let p = PlatoonState::new(leader, vec![c1, c2], 0).unwrap();
        let run = sequential_strategy(&p, &[v, v], &g, Sigma::DERIVED, Tolerance::default()).unwrap();
        let last = run.trace.last_state();
        let e = crate::dynamics::tracking_errors(last, &[v, v], &g);
        assert!(e.z.iter().all(|z| z.abs() < 1e-2), "{e:?}");
        assert!(e.z_prime.iter().all(|z| z.abs() < 1e-6), "{e:?}");
        assert_eq!(run.trace.steps(), run.total_steps());
        assert!(run.trace.states.iter().all(|s| crate::feasibility::platoon_is_feasible(s, &[v, v], &g)));
    }

    #[test]
    fn trivial_profile_holds() {
        let g = GlobalParams { delta_margin: 0.0, ..gp() };
        let sc = ScenarioE1::boundary(10.0, 10.0, vp(), g).unwrap();
        let b = blended_profile(&sc, Sigma::DERIVED, Tolerance::default()).unwrap();
        assert!(b.sequence.controls.iter().all(|&u| u == 0.0));
    }
}
