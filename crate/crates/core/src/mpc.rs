//! Finite-horizon platoon controller.
//!
//! The controls of all CAVs over the horizon are the only decision variables;
//! positions and speeds are affine in them (including the previous-control term
//! of the uncertainty model), so the speed band, safe-distance and terminal
//! constraints are linear and the tracking cost is a convex quadratic.
//! Variable `i * P + p` is the control of CAV `i` (0-based) at prediction step `p`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{desired_spacing, safe_distance, step_cav, PlatoonState, PositionHistory, VehicleState};
use crate::error::{check, Result};
use crate::params::{GlobalParams, NewellParams, VehicleParams};
use crate::qp::{self, KktResidual, QpProblem, QpSettings, QpStatus};

/// Tracking-cost weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcWeights {
    pub q_z: DMatrix<f64>,
    pub q_zp: DMatrix<f64>,
    pub omega1: f64,
}

impl MpcWeights {
    pub fn identity(n: usize, omega1: f64) -> Self {
        Self::diagonal(n, 1.0, 1.0, omega1)
    }

    /// Uniform diagonal weights for `n` vehicles.
    pub fn diagonal(n: usize, q_z: f64, q_zp: f64, omega1: f64) -> Self {
        Self { q_z: DMatrix::identity(n, n) * q_z, q_zp: DMatrix::identity(n, n) * q_zp, omega1 }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, q) in [("q_z", &self.q_z), ("q_zp", &self.q_zp)] {
            check(q.nrows() == n && q.ncols() == n, name, || format!("expected {n}x{n}, got {}x{}", q.nrows(), q.ncols()))?;
            check((q - q.transpose()).amax() <= 1e-12 * (1.0 + q.amax()), name, || "not symmetric".into())?;
            let floor = q.clone().symmetric_eigenvalues().min();
            check(floor >= -1e-10, name, || format!("not positive semidefinite (eigenvalue {floor})"))?;
        }
        check(self.omega1 >= 0.0, "omega1", || format!("must be >= 0, got {}", self.omega1))
    }
}

/// Symmetric per-vehicle boxes on the terminal spacing and speed errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSet {
    pub zeta_x: f64,
    pub zeta_v: f64,
}

impl Default for TerminalSet {
    fn default() -> Self {
        Self { zeta_x: 0.5, zeta_v: 0.2 }
    }
}

impl TerminalSet {
    pub fn validate(&self) -> Result<()> {
        check(self.zeta_x > 0.0, "zeta_x", || format!("must be positive, got {}", self.zeta_x))?;
        check(self.zeta_v > 0.0, "zeta_v", || format!("must be positive, got {}", self.zeta_v))
    }
}

/// Predicted leader position and speed at one future step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdvPoint {
    pub x: f64,
    pub v: f64,
}

/// How the controller extrapolates the leader over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HdvPrediction {
    ConstantSpeed,
    /// Shifted trajectory of an upstream vehicle.
    Newell { history: PositionHistory, params: NewellParams },
}

impl HdvPrediction {
    /// Leader states at steps `k + 1 ..= k + horizon`.
    pub fn predict(&self, leader: &VehicleState, k: i64, horizon: usize, gp: &GlobalParams) -> Result<Vec<HdvPoint>> {
        match self {
            HdvPrediction::ConstantSpeed => Ok((1..=horizon)
                .map(|p| HdvPoint { x: leader.x + p as f64 * gp.tau * leader.v, v: leader.v })
                .collect()),
            HdvPrediction::Newell { history, params } => {
                let mut prev = leader.x;
                (1..=horizon as i64)
                    .map(|p| {
                        let x = crate::dynamics::predict_hdv(history, params, k + p)?;
                        let v = (x - prev) / gp.tau;
                        prev = x;
                        Ok(HdvPoint { x, v })
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub horizon: usize,
    pub initial: PlatoonState,
    /// Leader states at steps `1..=horizon` ahead.
    pub hdv: Vec<HdvPoint>,
    pub weights: MpcWeights,
    pub terminal: TerminalSet,
    pub terminal_enabled: bool,
    pub vps: Vec<VehicleParams>,
    pub gp: GlobalParams,
}

impl MpcProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.initial.len();
        check(self.horizon >= 1, "horizon", || "must be >= 1".into())?;
        check(n >= 1, "vehicles", || "at least one CAV is required".into())?;
        check(self.hdv.len() >= self.horizon, "hdv_prediction", || {
            format!("{} points for a horizon of {}", self.hdv.len(), self.horizon)
        })?;
        check(self.vps.len() == n, "vehicles", || format!("{} parameter blocks for {n} CAVs", self.vps.len()))?;
        self.vps.iter().try_for_each(VehicleParams::validate)?;
        self.gp.validate()?;
        self.terminal.validate()?;
        self.weights.validate(n)
    }

    pub fn num_vehicles(&self) -> usize {
        self.initial.len()
    }

    pub fn num_variables(&self) -> usize {
        self.num_vehicles() * self.horizon
    }

    fn var(&self, i: usize, p: usize) -> usize {
        i * self.horizon + p
    }

    /// States of every CAV over the horizon under `controls` (flat, variable order),
    /// stepped directly through the vehicle model.
    pub fn rollout(&self, controls: &[f64]) -> Vec<Vec<VehicleState>> {
        (0..self.num_vehicles())
            .map(|i| {
                let mut s = self.initial.cavs[i];
                let mut traj = vec![s];
                for p in 0..self.horizon {
                    s = step_cav(&s, controls[self.var(i, p)], &self.vps[i], &self.gp);
                    traj.push(s);
                }
                traj
            })
            .collect()
    }

    /// Tracking cost evaluated on an explicit rollout: over `p = 1..=P`,
    /// `1/2 (z' Q_z z + z'' Q_zp z'') + tau^2 / 2 * omega1 * |u(p - 1)|^2`.
    pub fn explicit_cost(&self, controls: &[f64]) -> f64 {
        let n = self.num_vehicles();
        let traj = self.rollout(controls);
        let mut cost = 0.0;
        for p in 1..=self.horizon {
            let mut z = DVector::zeros(n);
            let mut zp = DVector::zeros(n);
            for i in 0..n {
                let (lead_x, lead_v) = if i == 0 { (self.hdv[p - 1].x, self.hdv[p - 1].v) } else { (traj[i - 1][p].x, traj[i - 1][p].v) };
                let f = traj[i][p];
                z[i] = lead_x - f.x - desired_spacing(f.v, lead_v, &self.vps[i], &self.gp);
                zp[i] = lead_v - f.v;
                let u = controls[self.var(i, p - 1)];
                cost += 0.5 * self.gp.tau * self.gp.tau * self.weights.omega1 * u * u;
            }
            cost += 0.5 * (z.dot(&(&self.weights.q_z * &z)) + zp.dot(&(&self.weights.q_zp * &zp)));
        }
        cost
    }
}

/// Affine function `c + g' U` of the stacked controls.
#[derive(Debug, Clone, PartialEq)]
struct Affine {
    c: f64,
    g: DVector<f64>,
}

impl Affine {
    fn constant(c: f64, dim: usize) -> Self {
        Self { c, g: DVector::zeros(dim) }
    }

    fn var(j: usize, dim: usize) -> Self {
        let mut g = DVector::zeros(dim);
        g[j] = 1.0;
        Self { c: 0.0, g }
    }

    /// `a * self + b * other + c`
    fn combine(&self, a: f64, other: &Affine, b: f64, c: f64) -> Self {
        Self { c: a * self.c + b * other.c + c, g: &self.g * a + &other.g * b }
    }

    fn eval(&self, u: &DVector<f64>) -> f64 {
        self.c + self.g.dot(u)
    }
}

/// Constraint rows by family, counted one-sided (`A U >= b` rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowCounts {
    pub accel: usize,
    pub speed: usize,
    pub safety: usize,
    pub terminal: usize,
}

impl RowCounts {
    pub fn total(&self) -> usize {
        self.accel + self.speed + self.safety + self.terminal
    }

    /// Total with each symmetric terminal box counted as one two-sided row.
    pub fn total_terminal_two_sided(&self) -> usize {
        self.accel + self.speed + self.safety + self.terminal / 2
    }
}

/// The condensed program plus what is needed to map a solution back to states.
#[derive(Debug, Clone)]
pub struct Condensed {
    pub qp: QpProblem,
    /// Cost terms independent of the controls.
    pub constant: f64,
    pub rows: RowCounts,
    x: Vec<Vec<Affine>>,
    v: Vec<Vec<Affine>>,
}

impl Condensed {
    /// Predicted states `[vehicle][step]`, step 0 being the initial state.
    pub fn predicted_states(&self, u: &DVector<f64>, problem: &MpcProblem) -> Vec<Vec<VehicleState>> {
        let horizon = problem.horizon;
        (0..problem.num_vehicles())
            .map(|i| {
                (0..=horizon)
                    .map(|p| {
                        let u_prev = if p == 0 { problem.initial.cavs[i].u_prev } else { u[problem.var(i, p - 1)] };
                        VehicleState::new(self.x[i][p].eval(u), self.v[i][p].eval(u), u_prev)
                    })
                    .collect()
            })
            .collect()
    }

    /// Objective of the condensed program including the constant.
    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        self.qp.objective(u) + self.constant
    }

    pub fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.qp.hessian * u + &self.qp.linear
    }
}

/// Builds the condensed quadratic program of `problem`.
#[allow(clippy::needless_range_loop)] // vehicle index addresses several parallel arrays
pub fn assemble(problem: &MpcProblem) -> Result<Condensed> {
    problem.validate()?;
    let (n, horizon, gp) = (problem.num_vehicles(), problem.horizon, &problem.gp);
    let dim = problem.num_variables();
    let tau = gp.tau;

    let mut xs = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for i in 0..n {
        let vp = &problem.vps[i];
        let s0 = problem.initial.cavs[i];
        let mut x = vec![Affine::constant(s0.x, dim)];
        let mut v = vec![Affine::constant(s0.v, dim)];
        let mut u_prev = Affine::constant(s0.u_prev, dim);
        for p in 0..horizon {
            let u = Affine::var(problem.var(i, p), dim);
            // realised acceleration (1 - eta) u - eps v + eta u_prev
            let a = u.combine(1.0 - vp.eta, &v[p], -vp.eps, 0.0).combine(1.0, &u_prev, vp.eta, 0.0);
            x.push(x[p].combine(1.0, &v[p], tau, 0.0).combine(1.0, &a, 0.5 * tau * tau, 0.0));
            v.push(v[p].combine(1.0, &a, tau, 0.0));
            u_prev = u;
        }
        xs.push(x);
        vs.push(v);
    }

    let lead = |i: usize, p: usize| -> (Affine, Affine) {
        if i == 0 {
            let h = problem.hdv[p - 1];
            (Affine::constant(h.x, dim), Affine::constant(h.v, dim))
        } else {
            (xs[i - 1][p].clone(), vs[i - 1][p].clone())
        }
    };
    // Spacing error lead_x - x - desired_spacing(v, lead_v), affine because the spacing policy is linear.
    let spacing_err = |i: usize, p: usize, margin: bool| -> Affine {
        let vp = &problem.vps[i];
        let (lx, lv) = lead(i, p);
        let c0 = safe_distance(0.0, 0.0, vp, gp) + if margin { gp.delta_margin } else { 0.0 };
        let cf = gp.delta1 * tau + gp.delta2 * tau;
        let cl = -gp.delta2 * tau;
        lx.combine(1.0, &xs[i][p], -1.0, -c0).combine(1.0, &vs[i][p], -cf, 0.0).combine(1.0, &lv, -cl, 0.0)
    };
    let speed_err = |i: usize, p: usize| -> Affine {
        let (_, lv) = lead(i, p);
        lv.combine(1.0, &vs[i][p], -1.0, 0.0)
    };

    // cost
    let mut h = DMatrix::identity(dim, dim) * (tau * tau * problem.weights.omega1);
    let mut f = DVector::zeros(dim);
    let mut constant = 0.0;
    for p in 1..=horizon {
        for (q, errs) in [
            (&problem.weights.q_z, (0..n).map(|i| spacing_err(i, p, true)).collect::<Vec<_>>()),
            (&problem.weights.q_zp, (0..n).map(|i| speed_err(i, p)).collect::<Vec<_>>()),
        ] {
            let gm = DMatrix::from_fn(n, dim, |r, c| errs[r].g[c]);
            let cv = DVector::from_fn(n, |r, _| errs[r].c);
            let qg = q * &gm;
            h += gm.transpose() * &qg;
            f += gm.transpose() * (q * &cv);
            constant += 0.5 * cv.dot(&(q * &cv));
        }
    }
    h = (&h + h.transpose()) * 0.5;

    // constraints, all as g' U >= b
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut counts = RowCounts { accel: 0, speed: 0, safety: 0, terminal: 0 };
    let push_ge = |rows: &mut Vec<(DVector<f64>, f64)>, a: &Affine, lower: f64| rows.push((a.g.clone(), lower - a.c));
    for p in 0..horizon {
        for i in 0..n {
            let vp = &problem.vps[i];
            let u = Affine::var(problem.var(i, p), dim);
            push_ge(&mut rows, &u, vp.a_min);
            push_ge(&mut rows, &u.combine(-1.0, &u, 0.0, 0.0), -vp.a_max);
            counts.accel += 2;
            let v = &vs[i][p + 1];
            push_ge(&mut rows, v, gp.v_min);
            push_ge(&mut rows, &v.combine(-1.0, v, 0.0, 0.0), -gp.v_max);
            counts.speed += 2;
            push_ge(&mut rows, &spacing_err(i, p + 1, false), 0.0);
            counts.safety += 1;
        }
    }
    if problem.terminal_enabled {
        for i in 0..n {
            for (e, w) in [(spacing_err(i, horizon, true), problem.terminal.zeta_x), (speed_err(i, horizon), problem.terminal.zeta_v)] {
                push_ge(&mut rows, &e, -w);
                push_ge(&mut rows, &e.combine(-1.0, &e, 0.0, 0.0), -w);
                counts.terminal += 2;
            }
        }
    }
    let a = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r].0[c]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let qp = QpProblem::new(h, f, a, b)?;
    Ok(Condensed { qp, constant, rows: counts, x: xs, v: vs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MpcStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

impl MpcStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            MpcStatus::Optimal => "optimal",
            MpcStatus::Infeasible => "infeasible",
            MpcStatus::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// `controls[i][p]`.
    pub controls: Vec<Vec<f64>>,
    /// `predicted_states[i][p]`, `p = 0..=P`.
    pub predicted_states: Vec<Vec<VehicleState>>,
    pub objective: f64,
    pub kkt_residual: KktResidual,
    pub status: MpcStatus,
    /// Infeasibility gap of the certificate, when infeasible.
    pub infeasibility_gap: Option<f64>,
    pub iterations: usize,
    pub active: Vec<usize>,
}

impl MpcSolution {
    pub fn first_controls(&self) -> Vec<f64> {
        self.controls.iter().map(|c| c[0]).collect()
    }
}

pub fn solve(problem: &MpcProblem, settings: &QpSettings, warm: Option<&[usize]>) -> Result<MpcSolution> {
    let condensed = assemble(problem)?;
    let sol = qp::solve(&condensed.qp, settings, warm);
    let (status, gap) = match &sol.status {
        QpStatus::Optimal => (MpcStatus::Optimal, None),
        QpStatus::Infeasible { certificate } => (MpcStatus::Infeasible, Some(certificate.gap)),
        QpStatus::MaxIterations => (MpcStatus::MaxIterations, None),
    };
    let n = problem.num_vehicles();
    let controls = (0..n).map(|i| (0..problem.horizon).map(|p| sol.x[problem.var(i, p)]).collect()).collect();
    Ok(MpcSolution {
        controls,
        predicted_states: condensed.predicted_states(&sol.x, problem),
        objective: condensed.objective(&sol.x),
        kkt_residual: sol.kkt,
        status,
        infeasibility_gap: gap,
        iterations: sol.iterations,
        active: sol.active,
    })
}

/// Solves and returns the first control of every CAV, or the unsuccessful solution.
pub fn mpc_step(
    problem: &MpcProblem,
    settings: &QpSettings,
    warm: Option<&[usize]>,
) -> Result<std::result::Result<(Vec<f64>, MpcSolution), MpcSolution>> {
    let sol = solve(problem, settings, warm)?;
    Ok(if sol.status == MpcStatus::Optimal { Ok((sol.first_controls(), sol)) } else { Err(sol) })
}

/// Everything but the state and leader prediction of a per-step problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcTemplate {
    pub horizon: usize,
    pub weights: MpcWeights,
    pub terminal: TerminalSet,
    pub terminal_enabled: bool,
    pub vps: Vec<VehicleParams>,
    pub gp: GlobalParams,
    pub prediction: HdvPrediction,
    pub settings: QpSettings,
}

impl MpcTemplate {
    pub fn problem(&self, state: &PlatoonState) -> Result<MpcProblem> {
        let hdv = self.prediction.predict(&state.leader, state.step, self.horizon, &self.gp)?;
        Ok(MpcProblem {
            horizon: self.horizon,
            initial: state.clone(),
            hdv,
            weights: self.weights.clone(),
            terminal: self.terminal,
            terminal_enabled: self.terminal_enabled,
            vps: self.vps.clone(),
            gp: self.gp,
        })
    }
}

/// Realised leader acceleration at each simulated step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HdvMotion {
    ConstantSpeed,
    Accelerations { values: Vec<f64> },
}

impl HdvMotion {
    pub fn accel(&self, step: usize) -> f64 {
        match self {
            HdvMotion::ConstantSpeed => 0.0,
            HdvMotion::Accelerations { values } => values.get(step).copied().unwrap_or(0.0),
        }
    }
}

/// Receding-horizon loop. Each step solves the program, applies the first
/// controls, or falls back to the midpoint of each CAV's one-step feasible
/// interval when the solve is unsuccessful.
pub fn receding_horizon_run(
    initial: &PlatoonState,
    steps: usize,
    template: &MpcTemplate,
    motion: &HdvMotion,
) -> Result<crate::sim::trace::Trace> {
    use crate::feasibility::step_platoon_with;
    use crate::sim::trace::{StepRecord, Trace};

    let n = initial.len();
    check(template.vps.len() == n, "vehicles", || format!("{} parameter blocks for {n} CAVs", template.vps.len()))?;
    let mut trace = Trace::new(initial.clone(), template.vps.clone(), template.gp);
    let mut state = initial.clone();
    let mut warm: Option<Vec<usize>> = None;
    for k in 0..steps {
        let problem = template.problem(&state)?;
        let sol = solve(&problem, &template.settings, warm.as_deref())?;
        let accel = motion.accel(k);
        let (controls, fallback) = if sol.status == MpcStatus::Optimal {
            warm = Some(sol.active.clone());
            (sol.first_controls(), false)
        } else {
            warm = None;
            let env = step_platoon_with(&state, accel, &template.vps, &template.gp, |_, iv| iv.midpoint());
            (env.controls, true)
        };
        let next = apply(&state, &controls, accel, &template.vps, &template.gp);
        let objective = (sol.status == MpcStatus::Optimal).then_some(sol.objective);
        trace.push(StepRecord { controls, leader_accel: accel, status: sol.status.as_str().into(), objective, fallback }, next.clone());
        state = next;
    }
    Ok(trace)
}

/// Advances the platoon with the given CAV controls and leader acceleration.
pub fn apply(state: &PlatoonState, controls: &[f64], leader_accel: f64, vps: &[VehicleParams], gp: &GlobalParams) -> PlatoonState {
    PlatoonState {
        leader: crate::dynamics::step_leader(&state.leader, leader_accel, gp),
        cavs: state.cavs.iter().zip(controls).zip(vps).map(|((s, &u), vp)| step_cav(s, u, vp, gp)).collect(),
        step: state.step + 1,
    }
}

/// Maximum constraint violation of a predicted plan, computed from the explicit rollout.
pub fn plan_violation(problem: &MpcProblem, controls: &[f64]) -> f64 {
    let traj = problem.rollout(controls);
    let (gp, n) = (&problem.gp, problem.num_vehicles());
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let vp = &problem.vps[i];
        for p in 1..=problem.horizon {
            let u = controls[problem.var(i, p - 1)];
            let s = traj[i][p];
            let (lx, lv) = if i == 0 { (problem.hdv[p - 1].x, problem.hdv[p - 1].v) } else { (traj[i - 1][p].x, traj[i - 1][p].v) };
            worst = worst
                .max(vp.a_min - u)
                .max(u - vp.a_max)
                .max(gp.v_min - s.v)
                .max(s.v - gp.v_max)
                .max(safe_distance(s.v, lv, vp, gp) - (lx - s.x));
            if p == problem.horizon && problem.terminal_enabled {
                let dx = lx - s.x - desired_spacing(s.v, lv, vp, gp);
                worst = worst.max(dx.abs() - problem.terminal.zeta_x).max((lv - s.v).abs() - problem.terminal.zeta_v);
            }
        }
    }
    worst
}
