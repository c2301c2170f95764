//! Brute-force checks of the feasibility envelope, the single-follower step
//! bounds and the platoon horizon bound.
//!
//! Every suite draws its cases from consecutive seeds starting at the suite
//! seed, evaluates them on the rayon pool and reduces them in seed order, so a
//! report depends only on its inputs. Reports serialise to JSON with a schema
//! version and render a short text summary.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{effective_accel, step_cav, tracking_errors, VehicleState};
use crate::error::{Error, Result};
use crate::feasibility::{
    check_nonempty_inequalities, delta1_floor, feasible_interval, g_slack, next_gap_slack, platoon_is_feasible,
    residuals, Predecessor, FEAS_TOL,
};
use crate::horizon::{
    self, blended_horizon, platoon_bounds, rho_transition, terminal_horizon_floor, OutOfDomainPolicy, ScenarioE1,
    Sigma, Situation,
};
use crate::maneuver::{self, Tolerance};
use crate::mpc::{receding_horizon_run, HdvMotion, HdvPrediction, MpcStatus, MpcTemplate, MpcWeights, TerminalSet};
use crate::params::{GlobalParams, VehicleParams};
use crate::qp::QpSettings;
use crate::sim::scenario::{gen_scenario, ScenarioKind};

pub const SCHEMA_VERSION: u32 = 1;

/// Worked examples kept in each report.
const MAX_EXAMPLES: usize = 10;

/// Inputs shared by every suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SuiteParams {
    pub vp: VehicleParams,
    pub gp: GlobalParams,
    pub heterogeneous: bool,
    pub seed: u64,
}


impl SuiteParams {
    fn case_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }
}

pub trait Report: Serialize {
    fn passed(&self) -> bool;
    fn summary(&self) -> String;

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports contain only serialisable values")
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Relative error with a unit floor on the scale.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Stream of case-private draws, independent of the scenario generator's.
fn case_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Leader acceleration within the limits of `vp` that keeps its speed in the band.
fn leader_accel(rng: &mut ChaCha8Rng, v: f64, vp: &VehicleParams, gp: &GlobalParams) -> f64 {
    let lo = vp.a_min.max((gp.v_min - v) / gp.tau);
    let hi = vp.a_max.min((gp.v_max - v) / gp.tau);
    draw(rng, lo, hi)
}

// ---------------------------------------------------------------------------
// Recursive feasibility of the envelope.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Example {
    pub seed: u64,
    pub step: usize,
    pub vehicle: usize,
    pub what: String,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub schema_version: u32,
    pub suite: String,
    pub params: SuiteParams,
    pub samples: usize,
    pub rollout_steps: usize,
    pub grid_points: usize,
    pub delta1_floor: f64,
    pub in_verified_regime: bool,
    pub intervals_checked: usize,
    pub empty_intervals: usize,
    pub grid_rollouts: usize,
    pub violations: usize,
    /// Smallest constraint residual seen after any grid step.
    pub worst_slack: f64,
    /// Failing non-emptiness comparisons, by label.
    pub inequality_failures: BTreeMap<String, usize>,
    pub examples: Vec<Lemma1Example>,
}

impl Report for Lemma1Report {
    fn passed(&self) -> bool {
        self.empty_intervals == 0 && self.violations == 0
    }

    fn summary(&self) -> String {
        let mut s = format!(
            "lemma1 {}: {} samples x {} steps, {} intervals ({} empty), {} grid rollouts, {} violations, worst slack {:.3e}",
            verdict(self.passed()),
            self.samples,
            self.rollout_steps,
            self.intervals_checked,
            self.empty_intervals,
            self.grid_rollouts,
            self.violations,
            self.worst_slack
        );
        if !self.in_verified_regime {
            s.push_str(&format!(
                "\n  outside the verified regime (delta1 = {} vs floor {:.3}, delta2 = {}); results are descriptive",
                self.params.gp.delta1, self.delta1_floor, self.params.gp.delta2
            ));
        }
        for (label, count) in &self.inequality_failures {
            s.push_str(&format!("\n  inequality {label} failed {count} times"));
        }
        s
    }
}

#[derive(Default)]
struct Lemma1Case {
    intervals: usize,
    empty: usize,
    grid: usize,
    violations: usize,
    worst: f64,
    failures: BTreeMap<String, usize>,
    examples: Vec<Lemma1Example>,
}

fn lemma1_case(params: &SuiteParams, i: usize, rollout_steps: usize, grid_points: usize) -> Result<Lemma1Case> {
    let seed = params.case_seed(i);
    let kind = ScenarioKind::Platoon { n: 1 + i % 3 };
    let sc = gen_scenario(kind, seed, &params.vp, &params.gp, params.heterogeneous)?;
    let gp = &sc.gp;
    let mut rng = case_rng(seed);
    let mut state = sc.platoon.clone();
    let mut out = Lemma1Case { worst: f64::INFINITY, ..Default::default() };
    for step in 0..rollout_steps {
        let a_lead = leader_accel(&mut rng, state.leader.v, &params.vp, gp);
        let mut pred = Predecessor::new(state.leader, a_lead);
        let mut next_cavs = Vec::with_capacity(state.cavs.len());
        for (j, (cav, vp)) in state.cavs.iter().zip(&sc.vps).enumerate() {
            let iv = feasible_interval(Some(&pred), cav, vp, gp);
            out.intervals += 1;
            if !iv.non_empty {
                out.empty += 1;
                let report = check_nonempty_inequalities(Some(&pred), cav, vp, gp);
                for c in report.failing() {
                    *out.failures.entry(c.label.to_string()).or_default() += 1;
                    if out.examples.len() < MAX_EXAMPLES {
                        out.examples.push(Lemma1Example { seed, step, vehicle: j + 1, what: c.label.into(), slack: c.slack });
                    }
                }
                return Ok(out);
            }
            let lead_next = pred.next_state(gp);
            for u in iv.grid(grid_points) {
                out.grid += 1;
                let worst = residuals(&lead_next, &step_cav(cav, u, vp, gp), vp, gp).worst();
                out.worst = out.worst.min(worst);
                if worst < -FEAS_TOL {
                    out.violations += 1;
                    if out.examples.len() < MAX_EXAMPLES {
                        out.examples.push(Lemma1Example { seed, step, vehicle: j + 1, what: format!("grid control {u}"), slack: worst });
                    }
                }
            }
            let u = draw(&mut rng, iv.lo, iv.hi);
            let next = step_cav(cav, u, vp, gp);
            pred = Predecessor::new(*cav, (next.v - cav.v) / gp.tau);
            next_cavs.push(next);
        }
        state = crate::dynamics::PlatoonState {
            leader: crate::dynamics::step_leader(&state.leader, a_lead, gp),
            cavs: next_cavs,
            step: state.step + 1,
        };
    }
    Ok(out)
}

/// Samples feasible platoons of one to three CAVs, then for `rollout_steps`
/// steps checks that each envelope is non-empty and that every point of a
/// `grid_points` grid over it keeps the next state feasible, advancing with a
/// random in-envelope control and a random band-respecting leader acceleration.
pub fn verify_lemma1(params: &SuiteParams, samples: usize, rollout_steps: usize, grid_points: usize) -> Result<Lemma1Report> {
    let cases: Vec<Lemma1Case> =
        (0..samples).into_par_iter().map(|i| lemma1_case(params, i, rollout_steps, grid_points)).collect::<Result<_>>()?;
    let floor = delta1_floor(&params.vp, &params.gp);
    let mut r = Lemma1Report {
        schema_version: SCHEMA_VERSION,
        suite: "lemma1".into(),
        params: *params,
        samples,
        rollout_steps,
        grid_points,
        delta1_floor: floor,
        in_verified_regime: params.gp.on_verified_delta2() && params.gp.delta1 >= floor && !params.heterogeneous,
        intervals_checked: 0,
        empty_intervals: 0,
        grid_rollouts: 0,
        violations: 0,
        worst_slack: f64::INFINITY,
        inequality_failures: BTreeMap::new(),
        examples: Vec::new(),
    };
    for c in cases {
        r.intervals_checked += c.intervals;
        r.empty_intervals += c.empty;
        r.grid_rollouts += c.grid;
        r.violations += c.violations;
        r.worst_slack = r.worst_slack.min(c.worst);
        for (k, v) in c.failures {
            *r.inequality_failures.entry(k).or_default() += v;
        }
        let room = MAX_EXAMPLES.saturating_sub(r.examples.len());
        r.examples.extend(c.examples.into_iter().take(room));
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Tightness of the envelope ends and the closed-form next gap.

/// A random follower state with a predecessor, both feasible now.
fn random_pair(rng: &mut ChaCha8Rng, vp: &VehicleParams, gp: &GlobalParams) -> (Predecessor, VehicleState) {
    let v_lead = draw(rng, gp.v_min, gp.v_max);
    let a_lead = leader_accel(rng, v_lead, vp, gp);
    let v = draw(rng, gp.v_min, gp.v_max);
    let u_prev = draw(rng, vp.a_min, vp.a_max);
    let gap = crate::dynamics::safe_distance(v, v_lead, vp, gp) + draw(rng, 0.0, 30.0);
    let x_lead = draw(rng, 0.0, 1000.0);
    (Predecessor::new(VehicleState::new(x_lead, v_lead, 0.0), a_lead), VehicleState::new(x_lead - gap, v, u_prev))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub schema_version: u32,
    pub suite: String,
    pub params: SuiteParams,
    pub samples: usize,
    pub perturbation: f64,
    /// Cases where the constraint did not flip, by bound.
    pub exceptions: BTreeMap<String, usize>,
}

impl Report for TightnessReport {
    fn passed(&self) -> bool {
        self.exceptions.values().all(|&c| c == 0)
    }

    fn summary(&self) -> String {
        let detail: Vec<String> = self.exceptions.iter().map(|(k, v)| format!("{k} {v}")).collect();
        format!(
            "envelope tightness {}: {} states, perturbation {:e}, exceptions: {}",
            verdict(self.passed()),
            self.samples,
            self.perturbation,
            detail.join(", ")
        )
    }
}

/// Each envelope end is exactly where its constraint switches: stepping with the
/// end minus and plus `perturbation` lands on opposite sides of the constraint.
pub fn verify_tightness(params: &SuiteParams, samples: usize, perturbation: f64) -> TightnessReport {
    let (vp, gp) = (&params.vp, &params.gp);
    let flips: Vec<[bool; 3]> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(params.case_seed(i));
            let (pred, cav) = random_pair(&mut rng, vp, gp);
            let iv = feasible_interval(Some(&pred), &cav, vp, gp);
            let lead_next = pred.next_state(gp);
            let at = |u: f64| residuals(&lead_next, &step_cav(&cav, u, vp, gp), vp, gp);
            let d = iv.a_upper_d.expect("follower has a predecessor");
            [
                at(iv.a_lower_v - perturbation).speed_low < 0.0 && at(iv.a_lower_v + perturbation).speed_low >= 0.0,
                at(iv.a_upper_v - perturbation).speed_high >= 0.0 && at(iv.a_upper_v + perturbation).speed_high < 0.0,
                at(d - perturbation).gap >= 0.0 && at(d + perturbation).gap < 0.0,
            ]
        })
        .collect();
    let mut exceptions = BTreeMap::new();
    for (j, name) in ["safety_upper", "speed_lower", "speed_upper"].iter().enumerate() {
        // Labels are listed alphabetically; map back to the array order.
        let idx = [2, 0, 1][j];
        exceptions.insert(name.to_string(), flips.iter().filter(|f| !f[idx]).count());
    }
    TightnessReport {
        schema_version: SCHEMA_VERSION,
        suite: "tightness".into(),
        params: *params,
        samples,
        perturbation,
        exceptions,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapAlgebraReport {
    pub schema_version: u32,
    pub suite: String,
    pub params: SuiteParams,
    pub samples: usize,
    pub tolerance: f64,
    pub max_relative_error: f64,
    pub exceedances: usize,
}

impl Report for GapAlgebraReport {
    fn passed(&self) -> bool {
        self.exceedances == 0
    }

    fn summary(&self) -> String {
        format!(
            "next-gap algebra {}: {} inputs, max relative error {:.3e} (tolerance {:e})",
            verdict(self.passed()),
            self.samples,
            self.max_relative_error,
            self.tolerance
        )
    }
}

/// Closed-form next gap slack against the slack of the stepped states, for
/// random states and controls over the whole acceleration range.
pub fn verify_gap_algebra(params: &SuiteParams, samples: usize, tolerance: f64) -> GapAlgebraReport {
    let (vp, gp) = (&params.vp, &params.gp);
    let errors: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(params.case_seed(i));
            let (pred, cav) = random_pair(&mut rng, vp, gp);
            let u = draw(&mut rng, vp.a_min, vp.a_max);
            let closed = next_gap_slack(&pred, &cav, effective_accel(&cav, u, vp), vp, gp);
            let stepped = g_slack(&pred.next_state(gp), &step_cav(&cav, u, vp, gp), vp, gp);
            relative_error(closed, stepped)
        })
        .collect();
    GapAlgebraReport {
        schema_version: SCHEMA_VERSION,
        suite: "gap_algebra".into(),
        params: *params,
        samples,
        tolerance,
        max_relative_error: errors.iter().copied().fold(0.0, f64::max),
        exceedances: errors.iter().filter(|&&e| e > tolerance).count(),
    }
}

// ---------------------------------------------------------------------------
// Transition onto the safe-distance bound.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Case {
    pub seed: u64,
    pub v0: f64,
    pub v1: f64,
    pub gap: f64,
    pub situation: Situation,
    pub rho_t: u64,
    pub steps: usize,
    /// Whether any admissible control sequence reaches the bound in `rho_t` steps.
    pub reachable_within_bound: bool,
    pub certificate_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub schema_version: u32,
    pub suite: String,
    pub params: SuiteParams,
    pub samples: usize,
    pub in_domain: usize,
    /// Same speed as the leader inside the steady spacing: the bound divides by zero.
    pub out_of_domain: usize,
    pub within_bound: usize,
    pub exceeded: usize,
    /// Exceedances for which no admissible control sequence meets the bound.
    pub exceeded_unreachable: usize,
    pub exceeded_by_situation: BTreeMap<String, usize>,
    pub strategy_failures: usize,
    /// Largest `steps / max(rho_t, 1)`.
    pub max_ratio: f64,
    pub examples: Vec<Lemma2Case>,
}

impl Report for Lemma2Report {
    fn passed(&self) -> bool {
        self.exceeded == 0 && self.strategy_failures == 0
    }

    fn summary(&self) -> String {
        let mut s = format!(
            "lemma2 {}: {}/{} in-domain transitions within rho_t, {} exceeded ({} provably unreachable), {} out of domain, {} strategy failures, max ratio {:.3}",
            verdict(self.passed()),
            self.within_bound,
            self.in_domain,
            self.exceeded,
            self.exceeded_unreachable,
            self.out_of_domain,
            self.strategy_failures,
            self.max_ratio
        );
        for (k, v) in &self.exceeded_by_situation {
            s.push_str(&format!("\n  exceeded while {k}: {v}"));
        }
        s
    }
}

enum Lemma2Outcome {
    OutOfDomain,
    StrategyFailed,
    Within(f64),
    Exceeded(Lemma2Case, f64),
}

fn lemma2_case(params: &SuiteParams, i: usize) -> Result<Lemma2Outcome> {
    let seed = params.case_seed(i);
    let s = gen_scenario(ScenarioKind::Single, seed, &params.vp, &params.gp, params.heterogeneous)?;
    let sc = s.follower(1)?;
    let bound = match rho_transition(&sc) {
        Ok(t) => t.total(),
        Err(Error::DegenerateRate { .. }) => return Ok(Lemma2Outcome::OutOfDomain),
        Err(e) => return Err(e),
    };
    let steps = match maneuver::strategy_s1(&sc) {
        Ok(seq) => seq.len(),
        Err(Error::NoConvergence { .. } | Error::Infeasible { .. }) => return Ok(Lemma2Outcome::StrategyFailed),
        Err(e) => return Err(e),
    };
    let ratio = steps as f64 / bound.max(1) as f64;
    if steps as u64 <= bound {
        return Ok(Lemma2Outcome::Within(ratio));
    }
    let reach = maneuver::boundary_reachable(&sc, bound as usize)?;
    Ok(Lemma2Outcome::Exceeded(
        Lemma2Case {
            seed,
            v0: sc.v0,
            v1: sc.v1_0,
            gap: sc.s1_0,
            situation: sc.situation(),
            rho_t: bound,
            steps,
            reachable_within_bound: reach.reachable,
            certificate_gap: reach.certificate_gap,
        },
        ratio,
    ))
}

/// Runs the transition strategy on admissible single-follower scenarios and
/// compares its length with the transition-time bound. Exceedances are checked
/// for attainability with an exact feasibility program at the bound.
pub fn verify_lemma2(params: &SuiteParams, samples: usize) -> Result<Lemma2Report> {
    let cases: Vec<Lemma2Outcome> = (0..samples).into_par_iter().map(|i| lemma2_case(params, i)).collect::<Result<_>>()?;
    let mut r = Lemma2Report {
        schema_version: SCHEMA_VERSION,
        suite: "lemma2".into(),
        params: *params,
        samples,
        in_domain: 0,
        out_of_domain: 0,
        within_bound: 0,
        exceeded: 0,
        exceeded_unreachable: 0,
        exceeded_by_situation: BTreeMap::new(),
        strategy_failures: 0,
        max_ratio: 0.0,
        examples: Vec::new(),
    };
    for c in cases {
        match c {
            Lemma2Outcome::OutOfDomain => r.out_of_domain += 1,
            Lemma2Outcome::StrategyFailed => {
                r.in_domain += 1;
                r.strategy_failures += 1;
            }
            Lemma2Outcome::Within(ratio) => {
                r.in_domain += 1;
                r.within_bound += 1;
                r.max_ratio = r.max_ratio.max(ratio);
            }
            Lemma2Outcome::Exceeded(case, ratio) => {
                r.in_domain += 1;
                r.exceeded += 1;
                r.exceeded_unreachable += usize::from(!case.reachable_within_bound);
                *r.exceeded_by_situation.entry(format!("{:?}", case.situation)).or_default() += 1;
                r.max_ratio = r.max_ratio.max(ratio);
                if r.examples.len() < MAX_EXAMPLES {
                    r.examples.push(case);
                }
            }
        }
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Shrink and brake step counts.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Case {
    pub seed: u64,
    pub v0: f64,
    pub v1: f64,
    pub rho_1: Option<u64>,
    pub log_argument: f64,
    /// Step at which the shrink rollout first reaches zero spacing offset.
    pub crossing: Option<usize>,
    pub clamped_steps: usize,
    /// First step where the speed excess fell to or below its geometric floor.
    pub excess_floor_broken_at: Option<usize>,
    pub rho_2: u64,
    pub brake_steps: Option<usize>,
    pub brake_end_offset: Option<f64>,
    /// Closed-form lower estimate of the offset at the end of braking.
    pub brake_offset_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Report {
    pub schema_version: u32,
    pub suite: String,
    pub params: SuiteParams,
    pub sigma: Sigma,
    pub samples: usize,
    pub in_domain: usize,
    pub out_of_domain: usize,
    /// Out-of-domain cases whose shrink rollout still crossed (empirical `rho_1`).
    pub out_of_domain_crossed: usize,
    /// Out-of-domain cases where the speed excess died out before the offset did.
    pub out_of_domain_stalled: usize,
    pub crossing_within: usize,
    pub crossing_exceeded: usize,
    /// Cases whose shrink law left the feasible interval at least once.
    pub clamped_cases: usize,
    pub excess_floor_violations: usize,
    /// Cases without speed excess, where braking is not defined.
    pub brake_not_applicable: usize,
    pub brake_length_mismatches: usize,
    pub brake_offset_nonpositive: usize,
    /// Cases whose closed-form offset estimate is not positive.
    pub brake_estimate_nonpositive: usize,
    /// Largest `crossing / max(rho_1, 1)` over in-domain cases.
    pub max_ratio: f64,
    pub examples: Vec<Lemma3Case>,
}

impl Lemma3Report {
    pub fn failures(&self) -> usize {
        self.crossing_exceeded + self.excess_floor_violations + self.brake_length_mismatches + self.brake_offset_nonpositive
    }
}

impl Report for Lemma3Report {
    fn passed(&self) -> bool {
        self.failures() == 0
    }

    fn summary(&self) -> String {
        format!(
            "lemma3 {}: {} in domain ({} crossed by rho_1, {} exceeded, {} clamped), {} out of domain ({} crossed, {} stalled); \
             excess floor broken {}, brake length mismatches {}, brake end offset <= 0: {}, estimate <= 0: {}, max ratio {:.3}",
            verdict(self.passed()),
            self.in_domain,
            self.crossing_within,
            self.crossing_exceeded,
            self.clamped_cases,
            self.out_of_domain,
            self.out_of_domain_crossed,
            self.out_of_domain_stalled,
            self.excess_floor_violations,
            self.brake_length_mismatches,
            self.brake_offset_nonpositive,
            self.brake_estimate_nonpositive,
            self.max_ratio
        )
    }
}

/// Lower estimate of the spacing offset left after full braking from the
/// boundary-riding state, with `sigma` in metres.
pub fn brake_offset_estimate(sc: &ScenarioE1, sigma_m: f64, rho_2: u64) -> f64 {
    let tau = sc.gp.tau;
    let e0 = sc.speed_excess();
    let d0 = horizon::d_coefficients(sc).d0;
    tau * e0 / (1.0 - d0) - 0.5 * tau * e0 - sigma_m - 0.5 * e0 * rho_2 as f64
}

fn lemma3_case(params: &SuiteParams, i: usize, sigma: Sigma) -> Result<(Lemma3Case, bool)> {
    let seed = params.case_seed(i);
    let s = gen_scenario(ScenarioKind::Boundary, seed, &params.vp, &params.gp, params.heterogeneous)?;
    let sc = s.follower(1)?;
    let formula = horizon::rho_one(&sc, sigma);
    let (rho_1, argument, sigma_m) = match &formula {
        Ok(r) => (Some(r.steps), r.argument, r.sigma),
        Err(Error::OutOfDomain { argument }) => {
            let scale = sc.gp.tau * sc.speed_excess();
            let derived = scale / (1.0 - horizon::d_coefficients(&sc).d0) - sc.spacing_offset();
            (None, *argument, if let Sigma::Fixed(m) = sigma { m } else { derived })
        }
        Err(e) => return Err(e.clone()),
    };
    let shrink = match maneuver::profile_to_zero_spacing(&sc) {
        Ok(seq) => Some(seq),
        Err(Error::NoConvergence { .. }) => None,
        Err(e) => return Err(e),
    };
    let crossing = shrink.as_ref().map(|q| q.len());
    let clamped_steps = shrink.as_ref().map_or(0, |q| q.meta.clamped_steps);

    // The excess must stay above v0 delta_0 D_inf^p up to the crossing.
    let d_inf = horizon::d_coefficients(&sc).d_inf;
    let check_to = match (rho_1, crossing) {
        (Some(r), Some(c)) => (r as usize).min(c),
        (Some(r), None) => r as usize,
        (None, _) => 0,
    };
    let mut excess_floor_broken_at = None;
    if rho_1.is_some() && sc.speed_excess() > 0.0 {
        let mut st = maneuver::PairState::initial(&sc);
        for p in 0..=check_to {
            let floor = sc.speed_excess() * d_inf.powi(p as i32);
            let excess = st.cav.v - sc.v0;
            let ok = if p == 0 { excess >= floor } else { excess > floor };
            if !ok {
                excess_floor_broken_at = Some(p);
                break;
            }
            st = st.advance(&sc, maneuver::shrink_control(&sc, &st).0);
        }
    }

    let rho_2 = horizon::rho_two(&sc);
    let (brake_steps, brake_end_offset) = match maneuver::profile_brake(&sc) {
        Ok(seq) => (Some(seq.len()), Some(seq.rollout(&sc).last().spacing_offset(&sc))),
        Err(Error::NotApplicable(_)) => (None, None),
        Err(e) => return Err(e),
    };
    let case = Lemma3Case {
        seed,
        v0: sc.v0,
        v1: sc.v1_0,
        rho_1,
        log_argument: argument,
        crossing,
        clamped_steps,
        excess_floor_broken_at,
        rho_2,
        brake_steps,
        brake_end_offset,
        brake_offset_estimate: brake_offset_estimate(&sc, sigma_m, rho_2),
    };
    let failed = match rho_1 {
        Some(r) => {
            crossing.is_none_or(|c| c as u64 > r)
                || excess_floor_broken_at.is_some()
                || brake_steps.is_some_and(|b| b as u64 != rho_2)
                || brake_end_offset.is_some_and(|z| z <= 0.0)
        }
        None => false,
    };
    Ok((case, failed))
}

/// Shrink-law rollouts against the spacing-convergence bound and full-braking
/// rollouts against the braking bound, on boundary-riding scenarios.
pub fn verify_lemma3(params: &SuiteParams, samples: usize, sigma: Sigma) -> Result<Lemma3Report> {
    let cases: Vec<(Lemma3Case, bool)> =
        (0..samples).into_par_iter().map(|i| lemma3_case(params, i, sigma)).collect::<Result<_>>()?;
    let mut r = Lemma3Report {
        schema_version: SCHEMA_VERSION,
        suite: "lemma3".into(),
        params: *params,
        sigma,
        samples,
        in_domain: 0,
        out_of_domain: 0,
        out_of_domain_crossed: 0,
        out_of_domain_stalled: 0,
        crossing_within: 0,
        crossing_exceeded: 0,
        clamped_cases: 0,
        excess_floor_violations: 0,
        brake_not_applicable: 0,
        brake_length_mismatches: 0,
        brake_offset_nonpositive: 0,
        brake_estimate_nonpositive: 0,
        max_ratio: 0.0,
        examples: Vec::new(),
    };
    for (c, failed) in cases {
        match c.rho_1 {
            None => {
                r.out_of_domain += 1;
                if c.crossing.is_some() {
                    r.out_of_domain_crossed += 1;
                } else {
                    r.out_of_domain_stalled += 1;
                }
                continue;
            }
            Some(bound) => {
                r.in_domain += 1;
                match c.crossing {
                    Some(k) if k as u64 <= bound => r.crossing_within += 1,
                    _ => r.crossing_exceeded += 1,
                }
                if let Some(k) = c.crossing {
                    r.max_ratio = r.max_ratio.max(k as f64 / bound.max(1) as f64);
                }
            }
        }
        r.clamped_cases += usize::from(c.clamped_steps > 0);
        r.excess_floor_violations += usize::from(c.excess_floor_broken_at.is_some());
        match (c.brake_steps, c.brake_end_offset) {
            (Some(b), Some(z)) => {
                r.brake_length_mismatches += usize::from(b as u64 != c.rho_2);
                r.brake_offset_nonpositive += usize::from(z <= 0.0);
            }
            _ => r.brake_not_applicable += 1,
        }
        r.brake_estimate_nonpositive += usize::from(c.brake_offset_estimate <= 0.0);
        if failed && r.examples.len() < MAX_EXAMPLES {
            r.examples.push(c);
        }
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Blended landing profile.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Case {
    pub seed: u64,
    pub v0: f64,
    pub v1: f64,
    pub outcome: String,
    /// Terminal offsets of the two bracket ends (pure braking, latest switch).
    pub brake_end: Option<f64>,
    pub shrink_end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Report {
    pub schema_version: u32,
    pub suite: String,
    pub params: SuiteParams,
    pub sigma: Sigma,
    pub tolerance: Tolerance,
    pub samples: usize,
    /// The bracket ends have opposite signs and the profile was built.
    pub bracketed: usize,
    pub landed: usize,
    /// Built profiles missing the tolerances or leaving the envelope.
    pub missed: usize,
    pub length_mismatches: usize,
    pub bracket_failures: usize,
    /// The shrink law stalls, so the step count itself is undefined.
    pub undefined: usize,
    pub max_terminal_spacing: f64,
    pub max_terminal_speed: f64,
    pub examples: Vec<Lemma4Case>,
}

impl Report for Lemma4Report {
    fn passed(&self) -> bool {
        self.missed == 0 && self.length_mismatches == 0
    }

    fn summary(&self) -> String {
        format!(
            "lemma4 {}: {}/{} bracketed profiles landed within ({:e} m, {:e} m/s), {} bracket failures, {} undefined, max |z| {:.3e}, max |z'| {:.3e}",
            verdict(self.passed()),
            self.landed,
            self.bracketed,
            self.tolerance.spacing,
            self.tolerance.speed,
            self.bracket_failures,
            self.undefined,
            self.max_terminal_spacing,
            self.max_terminal_speed
        )
    }
}

enum Lemma4Outcome {
    Built { landed: bool, length_ok: bool, z: f64, zp: f64, case: Lemma4Case },
    Bracket(Lemma4Case),
    Undefined,
}

fn lemma4_case(params: &SuiteParams, i: usize, sigma: Sigma, tol: Tolerance) -> Result<Lemma4Outcome> {
    let seed = params.case_seed(i);
    let s = gen_scenario(ScenarioKind::Boundary, seed, &params.vp, &params.gp, params.heterogeneous)?;
    let sc = s.follower(1)?;
    let case = |outcome: &str, b: Option<f64>, h: Option<f64>| Lemma4Case {
        seed,
        v0: sc.v0,
        v1: sc.v1_0,
        outcome: outcome.into(),
        brake_end: b,
        shrink_end: h,
    };
    match maneuver::blended_profile(&sc, sigma, tol) {
        Ok(b) => {
            // Re-check membership against an independent rollout.
            let roll = b.sequence.rollout(&sc);
            let inside = b.sequence.controls.iter().zip(&roll.intervals).all(|(&u, iv)| iv.contains_within(u, maneuver::SEQUENCE_TOL));
            let (z, zp) = (b.terminal_spacing.abs(), b.terminal_speed.abs());
            let landed = inside && z <= tol.spacing && zp <= tol.speed;
            let length_ok = b.sequence.len() as u64 == b.rho_1 + b.rho_2;
            Ok(Lemma4Outcome::Built { landed, length_ok, z, zp, case: case("built", Some(b.brake_end), Some(b.shrink_end)) })
        }
        Err(Error::NoSolution { low_end, high_end }) => Ok(Lemma4Outcome::Bracket(case("bracket", Some(low_end), Some(high_end)))),
        Err(Error::NoConvergence { .. }) => Ok(Lemma4Outcome::Undefined),
        Err(e) => Err(e),
    }
}

/// Builds the blended profile on boundary-riding scenarios and checks that it
/// lands on zero spacing and speed error after exactly `rho_1 + rho_2` steps.
pub fn verify_lemma4(params: &SuiteParams, samples: usize, sigma: Sigma, tol: Tolerance) -> Result<Lemma4Report> {
    let cases: Vec<Lemma4Outcome> =
        (0..samples).into_par_iter().map(|i| lemma4_case(params, i, sigma, tol)).collect::<Result<_>>()?;
    let mut r = Lemma4Report {
        schema_version: SCHEMA_VERSION,
        suite: "lemma4".into(),
        params: *params,
        sigma,
        tolerance: tol,
        samples,
        bracketed: 0,
        landed: 0,
        missed: 0,
        length_mismatches: 0,
        bracket_failures: 0,
        undefined: 0,
        max_terminal_spacing: 0.0,
        max_terminal_speed: 0.0,
        examples: Vec::new(),
    };
    for c in cases {
        match c {
            Lemma4Outcome::Built { landed, length_ok, z, zp, case } => {
                r.bracketed += 1;
                r.landed += usize::from(landed);
                r.missed += usize::from(!landed);
                r.length_mismatches += usize::from(!length_ok);
                r.max_terminal_spacing = r.max_terminal_spacing.max(z);
                r.max_terminal_speed = r.max_terminal_speed.max(zp);
                if (!landed || !length_ok) && r.examples.len() < MAX_EXAMPLES {
                    r.examples.push(case);
                }
            }
            Lemma4Outcome::Bracket(case) => {
                r.bracket_failures += 1;
                if r.examples.len() < MAX_EXAMPLES {
                    r.examples.push(case);
                }
            }
            Lemma4Outcome::Undefined => r.undefined += 1,
        }
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Platoon horizon bound.

/// Controller settings of the platoon suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Settings {
    pub n: usize,
    pub q_z: f64,
    pub q_zp: f64,
    pub omega1: f64,
    pub terminal: TerminalSet,
    pub sigma: Sigma,
    pub tol: Tolerance,
    /// Simulated steps per prediction step.
    pub run_factor: usize,
    /// Decision-variable budget per solve.
    pub variable_budget: usize,
    pub qp: QpSettings,
}

impl Theorem1Settings {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            q_z: 1.0,
            q_zp: 1.0,
            omega1: 1.0,
            terminal: TerminalSet::default(),
            sigma: Sigma::DERIVED,
            tol: Tolerance::default(),
            run_factor: 3,
            variable_budget: 120,
            qp: QpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcRun {
    pub lambda: f64,
    pub horizon: usize,
    pub variables: usize,
    pub steps: usize,
    /// Steps whose solve was not successful.
    pub events: usize,
    pub first_event: Option<usize>,
    /// The very first solve was proved infeasible.
    pub infeasible_at_start: bool,
    /// Fewest prediction steps for which the terminal boxes are reachable at all.
    pub terminal_floor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialOutcome {
    pub completed: bool,
    pub steps: usize,
    pub within_terminal_set: bool,
    pub feasible_throughout: bool,
    pub adjusted_steps: usize,
    /// Followers that needed the closing feedback after their open-loop plan.
    pub closed_by_feedback: usize,
    pub landing_fallbacks: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Case {
    pub seed: u64,
    pub p_ei: Vec<u64>,
    pub p_sum: u64,
    pub p_max: u64,
    pub sequential: SequentialOutcome,
    pub runs: Vec<MpcRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub events: usize,
    pub infeasible_at_start: usize,
    /// Failed runs whose horizon is below the terminal reachability floor.
    pub below_terminal_floor: usize,
    pub over_budget: usize,
    pub max_variables: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub schema_version: u32,
    pub suite: String,
    pub params: SuiteParams,
    pub settings: Theorem1Settings,
    pub samples: usize,
    pub lambdas: Vec<f64>,
    /// Scenarios whose horizon bound is undefined, by reason.
    pub undefined: BTreeMap<String, usize>,
    pub sequential_completed: usize,
    pub sequential_within_sum: usize,
    pub per_lambda: Vec<LambdaSummary>,
    pub cases: Vec<Theorem1Case>,
}

impl Theorem1Report {
    pub fn at_lambda(&self, lambda: f64) -> Option<&LambdaSummary> {
        self.per_lambda.iter().find(|s| s.lambda == lambda)
    }
}

impl Report for Theorem1Report {
    /// No solver failure at the conservative horizon (`lambda = 0`) in any
    /// scenario where the bound is defined.
    fn passed(&self) -> bool {
        self.at_lambda(0.0).is_none_or(|s| s.events == 0)
    }

    fn summary(&self) -> String {
        let defined = self.cases.len();
        let mut s = format!(
            "theorem1 n={} {}: {} scenarios, {} with defined bound; sequential strategy completed {} ({} within the summed bound)",
            self.settings.n,
            verdict(self.passed()),
            self.samples,
            defined,
            self.sequential_completed,
            self.sequential_within_sum
        );
        for (k, v) in &self.undefined {
            s.push_str(&format!("\n  bound undefined ({k}): {v}"));
        }
        for l in &self.per_lambda {
            s.push_str(&format!(
                "\n  lambda {:.2}: {}/{} runs without solver failure ({:.1}%), {} failed steps, {} infeasible at start, {} below terminal floor, max N*P {} ({} over budget)",
                l.lambda,
                l.successes,
                l.runs,
                100.0 * l.success_rate,
                l.events,
                l.infeasible_at_start,
                l.below_terminal_floor,
                l.max_variables,
                l.over_budget
            ));
        }
        s
    }
}

fn sequential_outcome(s: &crate::sim::scenario::Scenario, settings: &Theorem1Settings) -> SequentialOutcome {
    match maneuver::sequential_strategy(&s.platoon, &s.vps, &s.gp, settings.sigma, settings.tol) {
        Ok(run) => {
            let last = run.trace.last_state();
            let e = tracking_errors(last, &s.vps, &s.gp);
            let within = e.z.iter().all(|z| z.abs() <= settings.terminal.zeta_x)
                && e.z_prime.iter().all(|z| z.abs() <= settings.terminal.zeta_v);
            let feasible = run.trace.states.iter().all(|st| platoon_is_feasible(st, &s.vps, &s.gp));
            SequentialOutcome {
                completed: within && feasible,
                steps: run.total_steps(),
                within_terminal_set: within,
                feasible_throughout: feasible,
                adjusted_steps: run.adjusted_steps,
                closed_by_feedback: run.closing_steps.iter().filter(|&&c| c > 0).count(),
                landing_fallbacks: run.landing_fallbacks,
                error: None,
            }
        }
        Err(e) => SequentialOutcome {
            completed: false,
            steps: 0,
            within_terminal_set: false,
            feasible_throughout: false,
            adjusted_steps: 0,
            closed_by_feedback: 0,
            landing_fallbacks: 0,
            error: Some(e.to_string()),
        },
    }
}

fn theorem1_case(params: &SuiteParams, settings: &Theorem1Settings, lambdas: &[f64], i: usize) -> Result<std::result::Result<Theorem1Case, String>> {
    let seed = params.case_seed(i);
    let s = gen_scenario(ScenarioKind::Platoon { n: settings.n }, seed, &params.vp, &params.gp, params.heterogeneous)?;
    let followers = s.followers()?;
    let hb = match platoon_bounds(&followers, settings.sigma, OutOfDomainPolicy::Simulate) {
        Ok(hb) => hb,
        Err(Error::NoConvergence { .. }) => return Ok(Err("shrink law stalls".into())),
        Err(Error::DegenerateRate { .. }) => return Ok(Err("transition rate undefined".into())),
        Err(e) => return Err(e),
    };
    let sequential = sequential_outcome(&s, settings);
    let mut runs = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let horizon = blended_horizon(&hb, lambda).max(1) as usize;
        let template = MpcTemplate {
            horizon,
            weights: MpcWeights::diagonal(settings.n, settings.q_z, settings.q_zp, settings.omega1),
            terminal: settings.terminal,
            terminal_enabled: true,
            vps: s.vps.clone(),
            gp: s.gp,
            prediction: HdvPrediction::ConstantSpeed,
            settings: settings.qp,
        };
        let steps = settings.run_factor * horizon;
        let trace = receding_horizon_run(&s.platoon, steps, &template, &HdvMotion::ConstantSpeed)?;
        let fallbacks = trace.fallback_steps();
        let infeasible_at_start = trace.records.first().is_some_and(|r| r.status == MpcStatus::Infeasible.as_str());
        let floor = if fallbacks.is_empty() {
            None
        } else {
            terminal_horizon_floor(&s.platoon, &s.vps, &s.gp, settings.terminal.zeta_x, settings.terminal.zeta_v, 10 * horizon)
        };
        runs.push(MpcRun {
            lambda,
            horizon,
            variables: settings.n * horizon,
            steps,
            events: fallbacks.len(),
            first_event: fallbacks.first().copied(),
            infeasible_at_start,
            terminal_floor: floor,
        });
    }
    Ok(Ok(Theorem1Case { seed, p_ei: hb.p_ei(), p_sum: hb.p_en_sum, p_max: hb.p_en_max, sequential, runs }))
}

/// For each sampled platoon: the per-follower horizon bounds, a run of the
/// vehicle-by-vehicle strategy, and one receding-horizon run per `lambda` with
/// the blended horizon, terminal set enabled, over `run_factor` horizons.
pub fn verify_theorem1(params: &SuiteParams, settings: &Theorem1Settings, samples: usize, lambdas: &[f64]) -> Result<Theorem1Report> {
    let outcomes: Vec<_> =
        (0..samples).into_par_iter().map(|i| theorem1_case(params, settings, lambdas, i)).collect::<Result<Vec<_>>>()?;
    let mut undefined = BTreeMap::new();
    let mut cases = Vec::new();
    for o in outcomes {
        match o {
            Ok(c) => cases.push(c),
            Err(reason) => *undefined.entry(reason).or_default() += 1,
        }
    }
    let per_lambda = lambdas
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let runs: Vec<&MpcRun> = cases.iter().map(|c| &c.runs[j]).collect();
            let successes = runs.iter().filter(|r| r.events == 0).count();
            LambdaSummary {
                lambda,
                runs: runs.len(),
                successes,
                success_rate: if runs.is_empty() { 1.0 } else { successes as f64 / runs.len() as f64 },
                events: runs.iter().map(|r| r.events).sum(),
                infeasible_at_start: runs.iter().filter(|r| r.infeasible_at_start).count(),
                below_terminal_floor: runs.iter().filter(|r| r.terminal_floor.is_none_or(|f| f > r.horizon) && r.events > 0).count(),
                over_budget: runs.iter().filter(|r| r.variables > settings.variable_budget).count(),
                max_variables: runs.iter().map(|r| r.variables).max().unwrap_or(0),
            }
        })
        .collect();
    let sequential_completed = cases.iter().filter(|c| c.sequential.completed).count();
    let sequential_within_sum =
        cases.iter().filter(|c| c.sequential.completed && c.sequential.steps as u64 <= c.p_sum).count();
    Ok(Theorem1Report {
        schema_version: SCHEMA_VERSION,
        suite: "theorem1".into(),
        params: *params,
        settings: *settings,
        samples,
        lambdas: lambdas.to_vec(),
        undefined,
        sequential_completed,
        sequential_within_sum,
        per_lambda,
        cases,
    })
}

// ---------------------------------------------------------------------------
// QP solver against the reference solver and closed forms.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSoundnessReport {
    pub schema_version: u32,
    pub suite: String,
    pub seed: u64,
    pub samples: usize,
    pub max_dim: usize,
    pub objective_tol: f64,
    pub argmin_tol: f64,
    pub scalar_tol: f64,
    pub max_objective_error: f64,
    pub max_argmin_error: f64,
    pub objective_exceedances: usize,
    pub argmin_exceedances: usize,
    /// Problems the active-set solver did not solve to optimality.
    pub solver_failures: usize,
    /// Problems where the reference did not reach its tolerance; compared anyway.
    pub reference_unconverged: usize,
    pub scalar_cases: usize,
    pub max_scalar_error: f64,
}

impl Report for QpSoundnessReport {
    fn passed(&self) -> bool {
        self.objective_exceedances == 0
            && self.argmin_exceedances == 0
            && self.solver_failures == 0
            && self.max_scalar_error <= self.scalar_tol
    }

    fn summary(&self) -> String {
        format!(
            "qp soundness {}: {} problems (dim <= {}), max objective error {:.3e}, max argmin error {:.3e}, {} solver failures, \
             {} reference unconverged; {} scalar cases, max error {:.3e}",
            verdict(self.passed()),
            self.samples,
            self.max_dim,
            self.max_objective_error,
            self.max_argmin_error,
            self.solver_failures,
            self.reference_unconverged,
            self.scalar_cases,
            self.max_scalar_error
        )
    }
}

/// A random strictly convex problem with a known interior point: `x0` satisfies
/// every constraint with a positive margin.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> crate::qp::QpProblem {
    use nalgebra::{DMatrix, DVector};
    let g = DMatrix::from_fn(n, n, |_, _| draw(rng, -1.0, 1.0));
    let h = &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * draw(rng, 0.1, 1.0);
    let f = DVector::from_fn(n, |_, _| draw(rng, -5.0, 5.0));
    let a = DMatrix::from_fn(m, n, |_, _| draw(rng, -1.0, 1.0));
    let x0 = DVector::from_fn(n, |_, _| draw(rng, -1.0, 1.0));
    let b = &a * &x0 - DVector::from_fn(m, |_, _| draw(rng, 0.0, 1.0));
    crate::qp::QpProblem::new(h, f, a, b).expect("well-formed by construction")
}

/// Solver against the dual gradient reference on random problems of dimension
/// up to `max_dim`, plus one-dimensional problems with a closed-form minimiser.
pub fn verify_qp(seed: u64, samples: usize, max_dim: usize, scalar_cases: usize) -> QpSoundnessReport {
    use nalgebra::{DMatrix, DVector};
    let (objective_tol, argmin_tol, scalar_tol) = (1e-6, 1e-5, 1e-10);
    let rows: Vec<(f64, f64, bool, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(seed.wrapping_add(i as u64));
            let n = rng.gen_range(1..=max_dim);
            let m = rng.gen_range(0..=2 * n);
            let p = random_qp(&mut rng, n, m);
            let sol = crate::qp::solve(&p, &QpSettings::default(), None);
            let reference = crate::qp::reference::dual_projected_gradient(&p, 1e-11, 400_000).expect("positive definite");
            let obj = relative_error(p.objective(&sol.x), p.objective(&reference.x));
            let arg = (&sol.x - &reference.x).amax() / reference.x.amax().max(1.0);
            (obj, arg, sol.is_optimal(), reference.converged)
        })
        .collect();
    let scalar_errors: Vec<f64> = (0..scalar_cases)
        .map(|i| {
            let mut rng = case_rng(seed.wrapping_add((samples + i) as u64));
            let h = draw(&mut rng, 0.1, 10.0);
            let f = draw(&mut rng, -10.0, 10.0);
            let a = if rng.gen_bool(0.5) { draw(&mut rng, 0.5, 2.0) } else { -draw(&mut rng, 0.5, 2.0) };
            let b = draw(&mut rng, -10.0, 10.0);
            let p = crate::qp::QpProblem::new(
                DMatrix::from_element(1, 1, h),
                DVector::from_element(1, f),
                DMatrix::from_element(1, 1, a),
                DVector::from_element(1, b),
            )
            .expect("scalar problem");
            let free = -f / h;
            let exact = if a > 0.0 { free.max(b / a) } else { free.min(b / a) };
            let sol = crate::qp::solve(&p, &QpSettings::default(), None);
            (sol.x[0] - exact).abs() / exact.abs().max(1.0)
        })
        .collect();
    QpSoundnessReport {
        schema_version: SCHEMA_VERSION,
        suite: "qp".into(),
        seed,
        samples,
        max_dim,
        objective_tol,
        argmin_tol,
        scalar_tol,
        max_objective_error: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        max_argmin_error: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        objective_exceedances: rows.iter().filter(|r| r.0 > objective_tol).count(),
        argmin_exceedances: rows.iter().filter(|r| r.1 > argmin_tol).count(),
        solver_failures: rows.iter().filter(|r| !r.2).count(),
        reference_unconverged: rows.iter().filter(|r| !r.3).count(),
        scalar_cases,
        max_scalar_error: scalar_errors.iter().copied().fold(0.0, f64::max),
    }
}

// ---------------------------------------------------------------------------
// Condensed cost gradient against finite differences of the explicit cost.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub schema_version: u32,
    pub suite: String,
    pub params: SuiteParams,
    pub shapes: usize,
    pub points_per_shape: usize,
    pub tolerance: f64,
    pub max_relative_error: f64,
    pub exceedances: usize,
}

impl Report for GradientReport {
    fn passed(&self) -> bool {
        self.exceedances == 0
    }

    fn summary(&self) -> String {
        format!(
            "cost gradient {}: {} shapes x {} points, max relative error {:.3e} (tolerance {:e})",
            verdict(self.passed()),
            self.shapes,
            self.points_per_shape,
            self.max_relative_error,
            self.tolerance
        )
    }
}

/// Random controller problem: platoon of 1 to 3 CAVs with random uncertainty
/// coefficients, horizon 1 to 8, random diagonal weights.
pub fn random_mpc_problem(params: &SuiteParams, rng: &mut ChaCha8Rng, seed: u64) -> Result<crate::mpc::MpcProblem> {
    use nalgebra::DMatrix;
    let n = rng.gen_range(1..=3);
    let horizon = rng.gen_range(1..=8);
    let vp = VehicleParams { eps: draw(rng, 0.0, 0.05), eta: draw(rng, 0.0, 0.2), ..params.vp };
    let s = gen_scenario(ScenarioKind::Platoon { n }, seed, &vp, &params.gp, params.heterogeneous)?;
    let weights = MpcWeights {
        q_z: DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| draw(rng, 0.1, 2.0))),
        q_zp: DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| draw(rng, 0.1, 2.0))),
        omega1: draw(rng, 0.0, 2.0),
    };
    let mut platoon = s.platoon.clone();
    for cav in &mut platoon.cavs {
        cav.u_prev = draw(rng, vp.a_min, vp.a_max);
    }
    let hdv = HdvPrediction::ConstantSpeed.predict(&platoon.leader, 0, horizon, &s.gp)?;
    Ok(crate::mpc::MpcProblem {
        horizon,
        initial: platoon,
        hdv,
        weights,
        terminal: TerminalSet::default(),
        terminal_enabled: true,
        vps: s.vps,
        gp: s.gp,
    })
}

/// Gradient of the condensed objective against central differences of the
/// cost evaluated on explicit rollouts.
pub fn verify_cost_gradient(params: &SuiteParams, shapes: usize, points: usize, tolerance: f64) -> Result<GradientReport> {
    let errors: Vec<f64> = (0..shapes)
        .into_par_iter()
        .map(|i| {
            let seed = params.case_seed(i);
            let mut rng = case_rng(seed);
            let problem = random_mpc_problem(params, &mut rng, seed)?;
            let condensed = crate::mpc::assemble(&problem)?;
            let dim = problem.num_variables();
            let mut worst: f64 = 0.0;
            for _ in 0..points {
                let u = nalgebra::DVector::from_fn(dim, |_, _| draw(&mut rng, params.vp.a_min, params.vp.a_max));
                let g = condensed.gradient(&u);
                for j in 0..dim {
                    let h = 1e-4 * u[j].abs().max(1.0);
                    let (mut up, mut dn) = (u.clone(), u.clone());
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (problem.explicit_cost(up.as_slice()) - problem.explicit_cost(dn.as_slice())) / (2.0 * h);
                    worst = worst.max(relative_error(g[j], fd));
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(GradientReport {
        schema_version: SCHEMA_VERSION,
        suite: "cost_gradient".into(),
        params: *params,
        shapes,
        points_per_shape: points,
        tolerance,
        max_relative_error: errors.iter().copied().fold(0.0, f64::max),
        exceedances: errors.iter().filter(|&&e| e > tolerance).count(),
    })
}
