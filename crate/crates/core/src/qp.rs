//! Dense convex quadratic programs
//!
//! ```text
//! minimise  1/2 x' H x + f' x   subject to   A x >= b
//! ```
//!
//! solved with the Goldfarb-Idnani dual active-set method. The Hessian factor
//! `H = L L'` is computed once; the method works on `J = L^{-T}` and an upper
//! triangular `R`, both updated by Givens rotations as constraints enter and leave
//! the active set. Positive semidefinite Hessians are handled by an outer
//! proximal-point loop on `H + mu I`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    /// One row per constraint.
    pub constraints: DMatrix<f64>,
    pub bounds: DVector<f64>,
}

impl QpProblem {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>, constraints: DMatrix<f64>, bounds: DVector<f64>) -> Result<Self> {
        let n = linear.len();
        check(hessian.nrows() == n && hessian.ncols() == n, "hessian", || {
            format!("expected {n}x{n}, got {}x{}", hessian.nrows(), hessian.ncols())
        })?;
        check(constraints.ncols() == n || constraints.nrows() == 0, "constraints", || {
            format!("expected {n} columns, got {}", constraints.ncols())
        })?;
        check(constraints.nrows() == bounds.len(), "bounds", || {
            format!("expected {} entries, got {}", constraints.nrows(), bounds.len())
        })?;
        let finite = hessian.iter().chain(linear.iter()).chain(constraints.iter()).chain(bounds.iter()).all(|v| v.is_finite());
        check(finite, "problem", || "non-finite entry".into())?;
        let asym = (&hessian - hessian.transpose()).amax();
        check(asym <= 1e-9 * (1.0 + hessian.amax()), "hessian", || format!("not symmetric (max deviation {asym})"))?;
        let constraints = if constraints.nrows() == 0 { DMatrix::zeros(0, n) } else { constraints };
        Ok(Self { hessian, linear, constraints, bounds })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.bounds.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    /// `A x - b`; non-negative entries are satisfied.
    pub fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.constraints * x - &self.bounds
    }

    /// Scaled first-order optimality residuals of a primal-dual pair.
    pub fn kkt_residual(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> KktResidual {
        let hx = &self.hessian * x;
        let atl = self.constraints.transpose() * lambda;
        let grad = &hx + &self.linear - &atl;
        let scale = 1.0 + hx.amax().max(self.linear.amax()).max(atl.amax());
        let slack = self.slacks(x);
        let primal = slack.iter().fold(0.0_f64, |acc, s| acc.max(-s)) / (1.0 + self.bounds.amax());
        let dual = lambda.iter().fold(0.0_f64, |acc, l| acc.max(-l));
        let comp = slack.iter().zip(lambda.iter()).fold(0.0_f64, |acc, (s, l)| acc.max((s * l).abs()));
        KktResidual {
            stationarity: grad.amax() / scale,
            primal,
            dual,
            complementarity: comp / (1.0 + (x.amax() * self.constraints.amax()).max(self.bounds.amax()) * lambda.amax().max(1.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

/// Farkas certificate: `y >= 0` with `A' y = 0` and `b' y = gap > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityCertificate {
    pub multipliers: Vec<f64>,
    pub gap: f64,
}

impl InfeasibilityCertificate {
    /// `(max |A' y| / max y, gap)`; a valid certificate has a tiny first entry and a positive gap.
    pub fn check(&self, problem: &QpProblem) -> (f64, f64) {
        let y = DVector::from_column_slice(&self.multipliers);
        let ymax = y.amax().max(f64::MIN_POSITIVE);
        let combo = problem.constraints.transpose() * &y;
        (combo.amax() / (ymax * (1.0 + problem.constraints.amax())), problem.bounds.dot(&y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible { certificate: InfeasibilityCertificate },
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub active: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub kkt: KktResidual,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    /// Iterations per unit of `n + m`.
    pub iterations_per_dim: usize,
    /// Relative tolerance when classifying a constraint as violated.
    pub feasibility_tol: f64,
    /// Proximal weight relative to the largest Hessian diagonal entry.
    pub proximal_weight: f64,
    pub max_proximal_rounds: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { iterations_per_dim: 50, feasibility_tol: 1e-9, proximal_weight: 1e-4, max_proximal_rounds: 500 }
    }
}

/// Solves `problem`. `warm` lists constraints active in a related earlier solve;
/// violated ones among them enter the active set first.
pub fn solve(problem: &QpProblem, settings: &QpSettings, warm: Option<&[usize]>) -> QpSolution {
    let n = problem.dim();
    let budget = settings.iterations_per_dim * (n + problem.num_constraints()).max(1);
    let dmax = problem.hessian.diagonal().amax().max(1.0);
    if let Some(chol) = strict_factor(&problem.hessian, dmax) {
        let inner = GoldfarbIdnani::new(problem, &chol, &problem.linear, settings, budget).run(warm);
        return finish(problem, inner);
    }
    // Semidefinite: minimise the proximal objective around the previous iterate until it stalls.
    let mu = settings.proximal_weight * dmax;
    let shifted = &problem.hessian + DMatrix::identity(n, n) * mu;
    let chol = Cholesky::new(shifted).expect("a positive shift makes the Hessian definite");
    let mut center = DVector::zeros(n);
    let mut iterations = 0;
    let mut active: Vec<usize> = warm.map(<[usize]>::to_vec).unwrap_or_default();
    let mut last = None;
    for _ in 0..settings.max_proximal_rounds {
        let linear = &problem.linear - &center * mu;
        let inner = GoldfarbIdnani::new(problem, &chol, &linear, settings, budget).run(Some(&active));
        iterations += inner.iterations;
        let moved = (&inner.x - &center).amax();
        let done = inner.status != QpStatus::Optimal || moved <= 1e-10 * (1.0 + inner.x.amax());
        center = inner.x.clone();
        active = inner.active.clone();
        last = Some(inner);
        if done {
            break;
        }
    }
    let mut inner = last.expect("at least one proximal round");
    inner.iterations = iterations;
    finish(problem, inner)
}

fn strict_factor(h: &DMatrix<f64>, dmax: f64) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(h.clone())?;
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &p| a.min(p * p));
    (min_pivot > 1e-12 * dmax).then_some(chol)
}

fn finish(problem: &QpProblem, inner: Inner) -> QpSolution {
    let kkt = problem.kkt_residual(&inner.x, &inner.lambda);
    QpSolution {
        objective: problem.objective(&inner.x),
        x: inner.x,
        lambda: inner.lambda,
        active: inner.active,
        iterations: inner.iterations,
        status: inner.status,
        kkt,
    }
}

struct Inner {
    x: DVector<f64>,
    lambda: DVector<f64>,
    active: Vec<usize>,
    iterations: usize,
    status: QpStatus,
}

struct GoldfarbIdnani<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    x0: DVector<f64>,
    j0: DMatrix<f64>,
    row_norm: Vec<f64>,
    tol: f64,
    budget: usize,
}

impl<'a> GoldfarbIdnani<'a> {
    fn new(
        problem: &'a QpProblem,
        chol: &Cholesky<f64, Dyn>,
        linear: &DVector<f64>,
        settings: &QpSettings,
        budget: usize,
    ) -> Self {
        let n = problem.dim();
        let lt = chol.l().transpose();
        let j0 = lt.solve_upper_triangular(&DMatrix::identity(n, n)).expect("triangular factor is invertible");
        let x0 = -chol.solve(linear);
        let row_norm = (0..problem.num_constraints()).map(|i| problem.constraints.row(i).norm().max(1e-300)).collect();
        Self { a: &problem.constraints, b: &problem.bounds, x0, j0, row_norm, tol: settings.feasibility_tol, budget }
    }

    fn slack(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.a.row(i).dot(&x.transpose()) - self.b[i]
    }

    fn violated(&self, i: usize, s: f64) -> bool {
        s < -self.tol * (1.0 + self.b[i].abs())
    }

    fn run(&self, warm: Option<&[usize]>) -> Inner {
        let m = self.b.len();
        let mut excluded = vec![false; m];
        let mut iterations = 0;
        'restart: loop {
            let mut st = State::new(self.x0.clone(), self.j0.clone());
            let mut is_active = vec![false; m];
            'add: loop {
                iterations += 1;
                if iterations > self.budget {
                    return st.into_inner(m, iterations, QpStatus::MaxIterations);
                }
                let pick = |only_warm: bool| {
                    let mut best: Option<(usize, f64)> = None;
                    let candidates: Box<dyn Iterator<Item = usize>> = match (only_warm, warm) {
                        (true, Some(w)) => Box::new(w.iter().copied().filter(|&i| i < m)),
                        (true, None) => Box::new(std::iter::empty()),
                        (false, _) => Box::new(0..m),
                    };
                    for i in candidates {
                        if is_active[i] || excluded[i] {
                            continue;
                        }
                        let s = self.slack(i, &st.x);
                        if self.violated(i, s) {
                            let score = s / self.row_norm[i];
                            if best.is_none_or(|(_, b)| score < b) {
                                best = Some((i, score));
                            }
                        }
                    }
                    best.map(|(i, _)| i)
                };
                let Some(ip) = pick(true).or_else(|| pick(false)) else {
                    return st.into_inner(m, iterations, QpStatus::Optimal);
                };
                let np: DVector<f64> = self.a.row(ip).transpose();
                let mut s_ip = self.slack(ip, &st.x);
                let mut u_new = 0.0;
                loop {
                    iterations += 1;
                    if iterations > self.budget {
                        return st.into_inner(m, iterations, QpStatus::MaxIterations);
                    }
                    let iq = st.active.len();
                    let mut d = st.j.transpose() * &np;
                    let z = st.j.columns(iq, st.n - iq) * d.rows(iq, st.n - iq);
                    let r = st.solve_r(&d);
                    let mut t1 = f64::INFINITY;
                    let mut drop = None;
                    for k in 0..iq {
                        if r[k] > 0.0 && st.u[k] / r[k] < t1 {
                            t1 = st.u[k] / r[k];
                            drop = Some(k);
                        }
                    }
                    let znp = z.dot(&np);
                    let t2 = if z.norm_squared() > f64::EPSILON * np.norm_squared() && znp > 0.0 { -s_ip / znp } else { f64::INFINITY };
                    let t = t1.min(t2);
                    if !t.is_finite() {
                        let mut y = vec![0.0; m];
                        y[ip] = 1.0;
                        for (k, &c) in st.active.iter().enumerate() {
                            y[c] = (-r[k]).max(0.0);
                        }
                        let certificate = InfeasibilityCertificate { multipliers: y, gap: -s_ip };
                        return st.into_inner(m, iterations, QpStatus::Infeasible { certificate });
                    }
                    for k in 0..iq {
                        st.u[k] -= t * r[k];
                    }
                    u_new += t;
                    if t2.is_finite() {
                        st.x += &z * t;
                    }
                    if t2 <= t1 {
                        if st.add(&mut d) {
                            st.active.push(ip);
                            st.u.push(u_new);
                            is_active[ip] = true;
                            continue 'add;
                        }
                        // Numerically dependent on the active set; never pick it again.
                        excluded[ip] = true;
                        continue 'restart;
                    }
                    let k = drop.expect("partial step has a blocking constraint");
                    is_active[st.active[k]] = false;
                    st.remove(k);
                    s_ip = self.slack(ip, &st.x);
                }
            }
        }
    }
}

struct State {
    n: usize,
    x: DVector<f64>,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    r_norm: f64,
    active: Vec<usize>,
    u: Vec<f64>,
}

impl State {
    fn new(x: DVector<f64>, j: DMatrix<f64>) -> Self {
        let n = x.len();
        Self { n, x, j, r: DMatrix::zeros(n, n), r_norm: 1.0, active: Vec::new(), u: Vec::new() }
    }

    /// `R r = d[..iq]` by back substitution.
    fn solve_r(&self, d: &DVector<f64>) -> DVector<f64> {
        let iq = self.active.len();
        let mut r = DVector::zeros(iq);
        for i in (0..iq).rev() {
            let mut sum = d[i];
            for k in i + 1..iq {
                sum -= self.r[(i, k)] * r[k];
            }
            r[i] = sum / self.r[(i, i)];
        }
        r
    }

    /// Rotates `d` so that only its first `iq + 1` entries are non-zero, updating `J`,
    /// then appends the new column to `R`. Returns false on numerical dependence.
    fn add(&mut self, d: &mut DVector<f64>) -> bool {
        let iq = self.active.len();
        for jj in (iq + 1..self.n).rev() {
            let (mut cc, mut ss) = (d[jj - 1], d[jj]);
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            d[jj] = 0.0;
            cc /= h;
            ss /= h;
            if cc < 0.0 {
                cc = -cc;
                ss = -ss;
                d[jj - 1] = -h;
            } else {
                d[jj - 1] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in 0..self.n {
                let t1 = self.j[(k, jj - 1)];
                let t2 = self.j[(k, jj)];
                self.j[(k, jj - 1)] = t1 * cc + t2 * ss;
                self.j[(k, jj)] = xny * (t1 + self.j[(k, jj - 1)]) - t2;
            }
        }
        for i in 0..=iq {
            self.r[(i, iq)] = d[i];
        }
        if d[iq].abs() <= f64::EPSILON * self.r_norm {
            for i in 0..=iq {
                self.r[(i, iq)] = 0.0;
            }
            return false;
        }
        self.r_norm = self.r_norm.max(d[iq].abs());
        true
    }

    /// Drops the `k`-th active constraint and restores the triangular form of `R`.
    fn remove(&mut self, k: usize) {
        let iq = self.active.len();
        self.active.remove(k);
        self.u.remove(k);
        for i in k..iq - 1 {
            for row in 0..self.n {
                self.r[(row, i)] = self.r[(row, i + 1)];
            }
        }
        for row in 0..self.n {
            self.r[(row, iq - 1)] = 0.0;
        }
        let iq = iq - 1;
        for jj in k..iq {
            let (mut cc, mut ss) = (self.r[(jj, jj)], self.r[(jj + 1, jj)]);
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            cc /= h;
            ss /= h;
            self.r[(jj + 1, jj)] = 0.0;
            if cc < 0.0 {
                self.r[(jj, jj)] = -h;
                cc = -cc;
                ss = -ss;
            } else {
                self.r[(jj, jj)] = h;
            }
            let xny = ss / (1.0 + cc);
            for c in jj + 1..iq {
                let t1 = self.r[(jj, c)];
                let t2 = self.r[(jj + 1, c)];
                self.r[(jj, c)] = t1 * cc + t2 * ss;
                self.r[(jj + 1, c)] = xny * (t1 + self.r[(jj, c)]) - t2;
            }
            for row in 0..self.n {
                let t1 = self.j[(row, jj)];
                let t2 = self.j[(row, jj + 1)];
                self.j[(row, jj)] = t1 * cc + t2 * ss;
                self.j[(row, jj + 1)] = xny * (self.j[(row, jj)] + t1) - t2;
            }
        }
    }

    fn into_inner(self, m: usize, iterations: usize, status: QpStatus) -> Inner {
        let mut lambda = DVector::zeros(m);
        for (&c, &u) in self.active.iter().zip(&self.u) {
            lambda[c] = u;
        }
        Inner { x: self.x, lambda, active: self.active, iterations, status }
    }
}

/// Slow but simple solver used to cross-check [`solve`] on strictly convex problems.
pub mod reference {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    pub struct ReferenceSolution {
        pub x: DVector<f64>,
        pub lambda: DVector<f64>,
        pub iterations: usize,
        pub converged: bool,
    }

    /// Accelerated projected gradient on the dual `max_{lambda >= 0} -1/2 (A'l - f)' H^{-1} (A'l - f) + b'l`.
    /// Requires a positive definite Hessian and a feasible problem.
    pub fn dual_projected_gradient(problem: &QpProblem, tol: f64, max_iter: usize) -> Option<ReferenceSolution> {
        let chol = Cholesky::new(problem.hessian.clone())?;
        let a = &problem.constraints;
        let m = problem.num_constraints();
        let primal = |lambda: &DVector<f64>| chol.solve(&(a.transpose() * lambda - &problem.linear));
        if m == 0 {
            let x = primal(&DVector::zeros(0));
            return Some(ReferenceSolution { x, lambda: DVector::zeros(0), iterations: 0, converged: true });
        }
        let hinv_at = chol.solve(&a.transpose());
        let lip = (a * hinv_at).symmetric_eigenvalues().amax().max(1e-300);
        let step = 1.0 / lip;
        let mut lambda = DVector::zeros(m);
        let mut y = lambda.clone();
        let mut theta = 1.0_f64;
        for it in 1..=max_iter {
            let x = primal(&y);
            let grad = &problem.bounds - a * &x;
            let next = (&y + grad * step).map(|v| v.max(0.0));
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            y = &next + (&next - &lambda) * ((theta - 1.0) / theta_next);
            let moved = (&next - &lambda).amax();
            lambda = next;
            theta = theta_next;
            if it % 50 == 0 {
                let x = primal(&lambda);
                let kkt = problem.kkt_residual(&x, &lambda);
                if kkt.max() <= tol && moved <= tol * (1.0 + lambda.amax()) {
                    return Some(ReferenceSolution { x, lambda, iterations: it, converged: true });
                }
            }
        }
        let x = primal(&lambda);
        Some(ReferenceSolution { x, lambda, iterations: max_iter, converged: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn qp(h: &[f64], f: &[f64], a: &[f64], b: &[f64]) -> QpProblem {
        let n = f.len();
        let m = b.len();
        QpProblem::new(
            DMatrix::from_row_slice(n, n, h),
            DVector::from_column_slice(f),
            DMatrix::from_row_slice(m, n, a),
            DVector::from_column_slice(b),
        )
        .unwrap()
    }

    #[test]
    fn unconstrained_minimum() {
        let p = qp(&[2.0, 0.0, 0.0, 4.0], &[-2.0, -4.0], &[], &[]);
        let s = solve(&p, &QpSettings::default(), None);
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_onto_halfplane() {
        // min |x - (1,1)|^2 / 2 s.t. x0 + x1 <= 1
        let p = qp(&[1.0, 0.0, 0.0, 1.0], &[-1.0, -1.0], &[-1.0, -1.0], &[-1.0]);
        let s = solve(&p, &QpSettings::default(), None);
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.x[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.lambda[0], 0.5, epsilon = 1e-12);
        assert!(s.kkt.max() < 1e-12);
        assert_eq!(s.active, vec![0]);
    }

    #[test]
    fn textbook_problem() {
        // quadprog documentation example
        let p = qp(
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            &[0.0, -5.0, 0.0],
            &[-4.0, -3.0, 0.0, 2.0, 1.0, 0.0, 0.0, -2.0, 1.0],
            &[-8.0, 2.0, 0.0],
        );
        let s = solve(&p, &QpSettings::default(), None);
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.x[0], 0.4761905, epsilon = 1e-6);
        assert_abs_diff_eq!(s.x[1], 1.0476190, epsilon = 1e-6);
        assert_abs_diff_eq!(s.x[2], 2.0952381, epsilon = 1e-6);
        assert_abs_diff_eq!(s.objective, -2.380952, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_box_has_certificate() {
        // x >= 1 and x <= 0
        let p = qp(&[1.0], &[0.0], &[1.0, -1.0], &[1.0, 0.0]);
        let s = solve(&p, &QpSettings::default(), None);
        let QpStatus::Infeasible { certificate } = &s.status else { panic!("{:?}", s.status) };
        let (combo, gap) = certificate.check(&p);
        assert!(combo < 1e-12);
        assert!(gap > 0.0);
        assert!(certificate.gap > 0.0);
    }

    #[test]
    fn semidefinite_hessian_uses_proximal_loop() {
        // min x0^2/2 + x1 s.t. x1 >= 2, x0 >= 1
        let p = qp(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0], &[0.0, 1.0, 1.0, 0.0], &[2.0, 1.0]);
        let s = solve(&p, &QpSettings::default(), None);
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.x[1], 2.0, epsilon = 1e-7);
        assert!(s.kkt.max() < 1e-6);
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let p = qp(
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            &[0.0, -5.0, 0.0],
            &[-4.0, -3.0, 0.0, 2.0, 1.0, 0.0, 0.0, -2.0, 1.0],
            &[-8.0, 2.0, 0.0],
        );
        let cold = solve(&p, &QpSettings::default(), None);
        let warm = solve(&p, &QpSettings::default(), Some(&cold.active));
        assert_abs_diff_eq!((&cold.x - &warm.x).amax(), 0.0, epsilon = 1e-12);
        assert!(warm.iterations <= cold.iterations);
    }

    #[test]
    fn reference_agrees_on_textbook_problem() {
        let p = qp(
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            &[0.0, -5.0, 0.0],
            &[-4.0, -3.0, 0.0, 2.0, 1.0, 0.0, 0.0, -2.0, 1.0],
            &[-8.0, 2.0, 0.0],
        );
        let r = reference::dual_projected_gradient(&p, 1e-10, 200_000).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.x[1], 1.0476190, epsilon = 1e-6);
    }

    #[test]
    fn rejects_bad_shapes() {
        let r = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(3), DMatrix::zeros(0, 3), DVector::zeros(0));
        assert!(r.is_err());
        let r = QpProblem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        );
        assert!(r.is_err());
    }
}
