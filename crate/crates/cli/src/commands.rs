//! The five subcommands. Each writes its artefacts under the output directory,
//! prints a human-readable summary and returns whether the run is clean.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use platoon::dynamics::{tracking_errors, PlatoonState, VehicleState};
use platoon::feasibility::platoon_is_feasible;
use platoon::horizon::{
    self, blended_horizon, d_coefficients, platoon_bounds, rho_one, rho_transition, rho_two, vehicle_bounds,
    OutOfDomainPolicy, ScenarioE1, Sigma,
};
use platoon::maneuver::{self, ControlSequence, SequenceMeta, Strategy};
use platoon::mpc::{receding_horizon_run, HdvMotion, HdvPrediction, MpcTemplate};
use platoon::qp::QpSettings;
use platoon::sim::scenario::{gen_scenario, Scenario, ScenarioKind};
use platoon::sim::trace::Trace;
use platoon::sim::verify::{self, Report, SuiteParams, Theorem1Settings};
use serde::Serialize;
use serde_json::json;

use crate::config::{Config, ScenarioKindConfig};

/// Error class that maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct Common {
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
}

impl Common {
    fn sigma(&self) -> Sigma {
        self.config.sigma
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn write_trace(&self, trace: &Trace) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join("trace.csv");
        let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        trace.write_csv(file)?;
        Ok(path)
    }

    /// Summary document with the fully resolved configuration embedded.
    fn summary<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let doc = json!({ "seed": self.seed, "config": self.config, "result": body });
        self.write(name, &serde_json::to_string_pretty(&doc)?)
    }
}

/// Initial platoon from the configuration: the explicit block if present,
/// otherwise sampled from `seed`.
pub fn build_scenario(config: &Config, seed: u64) -> Result<Scenario> {
    let gp = config.global;
    let sc = &config.scenario;
    if let Some(e) = &sc.explicit {
        let leader = VehicleState::new(0.0, e.leader_speed, 0.0);
        let mut x = 0.0;
        let cavs: Vec<VehicleState> = e
            .speeds
            .iter()
            .zip(&e.gaps)
            .map(|(&v, &g)| {
                x -= g;
                VehicleState::new(x, v, 0.0)
            })
            .collect();
        let n = cavs.len();
        let on_bound = sc.kind == ScenarioKindConfig::Boundary;
        let kind = match n {
            1 if on_bound => ScenarioKind::Boundary,
            1 => ScenarioKind::Single,
            _ => ScenarioKind::Platoon { n },
        };
        let s = Scenario {
            kind,
            seed,
            platoon: PlatoonState::new(leader, cavs, 0)?,
            vps: (0..n).map(|i| config.vehicle(i)).collect(),
            gp,
        };
        s.check_admission().map_err(|e| usage(format!("scenario.explicit: {e}")))?;
        return Ok(s);
    }
    let kind = match sc.kind {
        ScenarioKindConfig::Boundary => ScenarioKind::Boundary,
        ScenarioKindConfig::Single => ScenarioKind::Single,
        ScenarioKindConfig::Platoon => ScenarioKind::Platoon { n: sc.n },
    };
    Ok(gen_scenario(kind, seed, &config.vehicle(0), &gp, sc.heterogeneous)?)
}

fn describe(s: &Scenario) -> String {
    let mut out = format!("leader speed {:.3} m/s", s.leader_speed());
    for i in 1..=s.platoon.len() {
        let (lead, cav) = (s.platoon.vehicle(i - 1), s.platoon.vehicle(i));
        out.push_str(&format!("\nCAV {i}: speed {:.3} m/s, gap {:.3} m", cav.v, lead.x - cav.x));
    }
    out
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BoundsRow {
    vehicle: usize,
    v0: f64,
    v1: f64,
    gap: f64,
    steady_spacing: f64,
    situation: String,
    rho_t: Option<horizon::TransitionTerms>,
    rho_1_formula: Option<u64>,
    log_argument: Option<f64>,
    sigma_m: Option<f64>,
    d0: f64,
    d_inf: f64,
    rho_1: Option<u64>,
    rho_1_source: Option<String>,
    rho_2: u64,
    rho: Option<u64>,
    p_e: Option<u64>,
    note: Option<String>,
}

fn bounds_row(i: usize, sc: &ScenarioE1, sigma: Sigma) -> BoundsRow {
    let landing = ScenarioE1::boundary(sc.v0, sc.v1_0.max(sc.v0), sc.vp, sc.gp).expect("landing state is admissible");
    let d = d_coefficients(&landing);
    let (rho_1_formula, log_argument, sigma_m) = match rho_one(&landing, sigma) {
        Ok(r) => (Some(r.steps), Some(r.argument), Some(r.sigma)),
        Err(platoon::Error::OutOfDomain { argument }) => (None, Some(argument), None),
        Err(_) => (None, None, None),
    };
    let (full, note) = match vehicle_bounds(sc, sigma, OutOfDomainPolicy::Simulate) {
        Ok(b) => (Some(b), None),
        Err(platoon::Error::NoConvergence { steps }) => {
            (None, Some(format!("the shrink law stalls with a positive spacing offset (simulated for {steps} steps)")))
        }
        Err(e) => (None, Some(e.to_string())),
    };
    BoundsRow {
        vehicle: i,
        v0: sc.v0,
        v1: sc.v1_0,
        gap: sc.s1_0,
        steady_spacing: sc.steady_spacing(),
        situation: format!("{:?}", sc.situation()),
        rho_t: rho_transition(sc).ok(),
        rho_1_formula,
        log_argument,
        sigma_m,
        d0: d.d0,
        d_inf: d.d_inf,
        rho_1: full.map(|b| b.rho_1),
        rho_1_source: full.map(|b| match b.rho_1_source {
            horizon::RhoOneSource::Formula { .. } => "formula".into(),
            horizon::RhoOneSource::Simulated { .. } => "simulated".into(),
        }),
        rho_2: rho_two(&landing),
        rho: full.map(|b| b.rho),
        p_e: full.map(|b| b.p_e),
        note,
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or("-".into(), |v| v.to_string())
}

pub fn cmd_bounds(common: &Common) -> Result<bool> {
    let lambda = common.config.horizon.lambda;
    let s = build_scenario(&common.config, common.seed)?;
    let followers = s.followers()?;
    let rows: Vec<BoundsRow> = followers.iter().enumerate().map(|(i, sc)| bounds_row(i + 1, sc, common.sigma())).collect();
    println!("{}", describe(&s));
    println!("{:>3} {:>13} {:>6} {:>22} {:>6} {:>6} {:>6}", "CAV", "situation", "rho_t", "rho_1", "rho_2", "rho", "P_E");
    for r in &rows {
        let rho_1 = match (r.rho_1_formula, r.rho_1, &r.log_argument) {
            (Some(f), _, _) => f.to_string(),
            (None, Some(sim), Some(a)) => format!("{sim} (sim; log arg {a:.3})"),
            (None, None, Some(a)) => format!("out of domain ({a:.3})"),
            _ => "-".into(),
        };
        println!(
            "{:>3} {:>13} {:>6} {:>22} {:>6} {:>6} {:>6}",
            r.vehicle,
            r.situation,
            opt(r.rho_t.map(|t| t.total())),
            rho_1,
            r.rho_2,
            opt(r.rho),
            opt(r.p_e)
        );
        println!(
            "    inputs: v0 {:.3}, v1 {:.3}, gap {:.3}, s0 {:.3}, D0 {:.5}, Dinf {:.5}, sigma {} m",
            r.v0,
            r.v1,
            r.gap,
            r.steady_spacing,
            r.d0,
            r.d_inf,
            r.sigma_m.map_or("-".into(), |m| format!("{m:.4}"))
        );
        if let Some(n) = &r.note {
            println!("    bound undefined: {n}");
        }
    }
    let aggregate = platoon_bounds(&followers, common.sigma(), OutOfDomainPolicy::Simulate).ok().map(|hb| {
        let blend = blended_horizon(&hb, lambda);
        println!("sum {}  max {}  blend(lambda = {lambda}) {blend}", hb.p_en_sum, hb.p_en_max);
        json!({ "sum": hb.p_en_sum, "max": hb.p_en_max, "lambda": lambda, "blend": blend })
    });
    if aggregate.is_none() {
        println!("platoon bound undefined for this scenario");
    }
    let path = common.summary("bounds.json", &json!({ "vehicles": rows, "platoon": aggregate }))?;
    println!("wrote {}", path.display());
    Ok(true)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStrategy {
    /// Reach the safe-distance bound only.
    Transition,
    /// Transition, then the shrink law until zero spacing offset.
    Shrink,
    /// Transition, then full braking to the leader speed.
    Brake,
    /// Transition, then the blended landing profile.
    Blended,
    /// Vehicle-by-vehicle transition and landing for a whole platoon.
    Sequential,
}

fn single_follower_plan(sc: &ScenarioE1, strategy: PlanStrategy, common: &Common) -> Result<ControlSequence> {
    let first = maneuver::strategy_s1(sc)?;
    let reached = first.rollout(sc).last().cav.v;
    let landing = ScenarioE1::boundary(sc.v0, reached.max(sc.v0), sc.vp, sc.gp)?;
    let tail = match strategy {
        PlanStrategy::Transition => None,
        PlanStrategy::Shrink => Some(maneuver::profile_to_zero_spacing(&landing)?),
        PlanStrategy::Brake => Some(maneuver::profile_brake(&landing)?),
        PlanStrategy::Blended => Some(
            maneuver::blended_profile(&landing, common.sigma(), common.config.experiment.tol)
                .context("no blended landing profile for this scenario; `--strategy sequential` finishes with a closing feedback")?
                .sequence,
        ),
        PlanStrategy::Sequential => unreachable!("handled by the platoon path"),
    };
    let Some(tail) = tail else { return Ok(first) };
    let controls = first.controls.iter().chain(&tail.controls).copied().collect();
    let meta = SequenceMeta { hold_steps: first.meta.hold_steps, clamped_steps: tail.meta.clamped_steps, ..SequenceMeta::new(Strategy::Custom) };
    Ok(ControlSequence::new(sc, controls, meta)?)
}

pub fn cmd_plan(common: &Common, strategy: PlanStrategy) -> Result<bool> {
    let s = build_scenario(&common.config, common.seed)?;
    println!("{}", describe(&s));
    let (trace, phases, closing) = if strategy == PlanStrategy::Sequential {
        let run = maneuver::sequential_strategy(&s.platoon, &s.vps, &s.gp, common.sigma(), common.config.experiment.tol)?;
        let closing = json!({ "closing_steps": run.closing_steps, "landing_fallbacks": run.landing_fallbacks });
        (run.trace, run.phase_steps, closing)
    } else {
        if s.platoon.len() != 1 {
            return Err(usage(format!(
                "strategy {strategy:?} drives a single follower; the scenario has {} (use `sequential`)",
                s.platoon.len()
            )));
        }
        let sc = s.follower(1)?;
        let seq = single_follower_plan(&sc, strategy, common)?;
        let n = seq.len();
        (maneuver::sequence_trace(&sc, &seq, "plan")?, vec![n], serde_json::Value::Null)
    };
    let last = trace.last_state();
    let errors = tracking_errors(last, &s.vps, &s.gp);
    let feasible = trace.states.iter().all(|st| platoon_is_feasible(st, &s.vps, &s.gp));
    let csv = common.write_trace(&trace)?;
    let body = json!({
        "command": "plan",
        "strategy": strategy,
        "steps": trace.steps(),
        "phase_steps": phases,
        "closing": closing,
        "terminal_spacing_errors": errors.z,
        "terminal_speed_errors": errors.z_prime,
        "feasible_throughout": feasible,
        "replay_error": trace.replay_error(),
        "trace": csv,
    });
    let path = common.summary("summary.json", &body)?;
    println!("{strategy:?}: {} steps, phases {phases:?}, feasible throughout: {feasible}", trace.steps());
    println!("terminal spacing errors {:?}, speed errors {:?}", errors.z, errors.z_prime);
    println!("wrote {} and {}", csv.display(), path.display());
    Ok(true)
}

// ---------------------------------------------------------------------------

pub fn cmd_mpc(common: &Common, steps: Option<usize>, no_terminal: bool) -> Result<bool> {
    let cfg = &common.config;
    let s = build_scenario(cfg, common.seed)?;
    println!("{}", describe(&s));
    let horizon = match cfg.horizon.prediction {
        Some(p) => p,
        None => {
            let hb = platoon_bounds(&s.followers()?, common.sigma(), OutOfDomainPolicy::Simulate).with_context(|| {
                "horizon bound undefined for this scenario; set horizon.prediction in the configuration"
            })?;
            blended_horizon(&hb, cfg.horizon.lambda).max(1) as usize
        }
    };
    let steps = steps.unwrap_or(cfg.experiment.run_factor * horizon);
    let template = MpcTemplate {
        horizon,
        weights: cfg.weights.for_vehicles(s.platoon.len()),
        terminal: cfg.terminal,
        terminal_enabled: !no_terminal,
        vps: s.vps.clone(),
        gp: s.gp,
        prediction: HdvPrediction::ConstantSpeed,
        settings: QpSettings::default(),
    };
    let trace = receding_horizon_run(&s.platoon, steps, &template, &HdvMotion::ConstantSpeed)?;
    let fallbacks = trace.fallback_steps();
    let errors = tracking_errors(trace.last_state(), &s.vps, &s.gp);
    let csv = common.write_trace(&trace)?;
    let body = json!({
        "command": "mpc",
        "horizon": horizon,
        "steps": steps,
        "terminal_enabled": !no_terminal,
        "fallback_steps": fallbacks,
        "terminal_spacing_errors": errors.z,
        "terminal_speed_errors": errors.z_prime,
        "replay_error": trace.replay_error(),
        "trace": csv,
    });
    let path = common.summary("summary.json", &body)?;
    println!("P = {horizon}, {steps} steps, {} unsuccessful solves (fallback to the envelope midpoint)", fallbacks.len());
    if let Some(k) = fallbacks.first() {
        println!("first unsuccessful solve at step {k}");
    }
    println!("final spacing errors {:?}, speed errors {:?}", errors.z, errors.z_prime);
    println!("wrote {} and {}", csv.display(), path.display());
    Ok(true)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Lemma1,
    Tightness,
    Algebra,
    Lemma2,
    Lemma3,
    Lemma4,
    Theorem1,
    Qp,
    Gradient,
}

impl Suite {
    fn name(&self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Tightness => "tightness",
            Suite::Algebra => "algebra",
            Suite::Lemma2 => "lemma2",
            Suite::Lemma3 => "lemma3",
            Suite::Lemma4 => "lemma4",
            Suite::Theorem1 => "theorem1",
            Suite::Qp => "qp",
            Suite::Gradient => "gradient",
        }
    }
}

/// Overrides accepted by `verify`.
#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub steps: Option<usize>,
    pub lambdas: Option<Vec<f64>>,
    pub n: Option<usize>,
}

fn emit<R: Report>(common: &Common, suite: Suite, report: &R) -> Result<bool> {
    println!("{}", report.summary());
    let doc = format!(
        "{{\n\"seed\": {},\n\"config\": {},\n\"report\": {}\n}}\n",
        common.seed,
        serde_json::to_string_pretty(&common.config)?,
        report.to_json()
    );
    let path = common.write(&format!("verify-{}.json", suite.name()), &doc)?;
    println!("wrote {}", path.display());
    Ok(report.passed())
}

pub fn cmd_verify(common: &Common, suite: Suite, opts: &VerifyOptions) -> Result<bool> {
    let cfg = &common.config;
    let params = SuiteParams { vp: cfg.vehicle(0), gp: cfg.global, heterogeneous: cfg.scenario.heterogeneous, seed: common.seed };
    let samples = cfg.experiment.samples;
    let exp = &cfg.experiment;
    match suite {
        Suite::Lemma1 => {
            let steps = opts.steps.unwrap_or(exp.rollout_steps);
            emit(common, suite, &verify::verify_lemma1(&params, samples, steps, exp.grid_points)?)
        }
        Suite::Tightness => emit(common, suite, &verify::verify_tightness(&params, samples, 1e-6)),
        Suite::Algebra => emit(common, suite, &verify::verify_gap_algebra(&params, samples, 1e-12)),
        Suite::Lemma2 => emit(common, suite, &verify::verify_lemma2(&params, samples)?),
        Suite::Lemma3 => emit(common, suite, &verify::verify_lemma3(&params, samples, cfg.sigma)?),
        Suite::Lemma4 => emit(common, suite, &verify::verify_lemma4(&params, samples, cfg.sigma, exp.tol)?),
        Suite::Theorem1 => {
            let n = opts.n.unwrap_or(cfg.scenario.n);
            if n == 0 {
                return Err(usage("--n must be at least 1"));
            }
            let lambdas = opts.lambdas.clone().unwrap_or_else(|| exp.lambdas.clone());
            let settings = Theorem1Settings {
                q_z: cfg.weights.q_z,
                q_zp: cfg.weights.q_zp,
                omega1: cfg.weights.omega1,
                terminal: cfg.terminal,
                sigma: cfg.sigma,
                tol: exp.tol,
                run_factor: exp.run_factor,
                ..Theorem1Settings::new(n)
            };
            emit(common, suite, &verify::verify_theorem1(&params, &settings, samples, &lambdas)?)
        }
        Suite::Qp => emit(common, suite, &verify::verify_qp(common.seed, samples, 30, 200)),
        Suite::Gradient => emit(common, suite, &verify::verify_cost_gradient(&params, samples, 10, 1e-5)?),
    }
}

// ---------------------------------------------------------------------------

pub fn cmd_plot(common: &Common, trace: &Path) -> Result<bool> {
    let file = fs::File::open(trace).with_context(|| format!("opening {}", trace.display()))?;
    let rows = platoon::sim::trace::read_csv(file).map_err(|e| usage(format!("{}: {e}", trace.display())))?;
    if rows.is_empty() {
        return Err(usage(format!("{}: trace has no rows", trace.display())));
    }
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    for path in crate::plot::plot_panels(&rows, &common.out)? {
        println!("wrote {}", path.display());
    }
    Ok(true)
}
