//! Cross-checks the active-set solver against exhaustive active-set enumeration
//! and the dual gradient reference on small random problems.

use nalgebra::{DMatrix, DVector};
use platoon::qp::{reference, solve, QpProblem, QpSettings, QpStatus};
use proptest::prelude::*;

/// Minimum over all active sets whose KKT point is primal and dual feasible.
fn enumerate(p: &QpProblem) -> Option<f64> {
    let (n, m) = (p.dim(), p.num_constraints());
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << m) {
        let set: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if set.len() > n {
            continue;
        }
        let k = set.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.hessian);
        for (c, &i) in set.iter().enumerate() {
            for j in 0..n {
                kkt[(j, n + c)] = -p.constraints[(i, j)];
                kkt[(n + c, j)] = p.constraints[(i, j)];
            }
            rhs[n + c] = p.bounds[i];
        }
        for j in 0..n {
            rhs[j] = -p.linear[j];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let dual_ok = (0..k).all(|c| sol[n + c] >= -1e-9);
        let primal_ok = p.slacks(&x).iter().all(|&s| s >= -1e-9);
        if dual_ok && primal_ok {
            let f = p.objective(&x);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

fn problem(n: usize, m: usize, seed_vals: &[f64], feasible: bool) -> QpProblem {
    let mut it = seed_vals.iter().copied().cycle();
    let g = DMatrix::from_fn(n, n, |_, _| it.next().unwrap());
    let h = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| 3.0 * it.next().unwrap());
    let a = DMatrix::from_fn(m, n, |_, _| it.next().unwrap());
    let x_feas = DVector::from_fn(n, |_, _| it.next().unwrap());
    let mut b = &a * &x_feas - DVector::from_fn(m, |_, _| it.next().unwrap().abs());
    if !feasible && m >= 2 {
        // Two opposite half-spaces with an empty intersection.
        let row = a.row(0).into_owned();
        let mut a2 = a.clone();
        a2.set_row(1, &(-&row));
        b[1] = 1.0 - b[0];
        return QpProblem::new(h, f, a2, b).unwrap();
    }
    QpProblem::new(h, f, a, b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_enumeration(n in 1usize..=4, m in 0usize..=6, vals in prop::collection::vec(-1.0f64..1.0, 64)) {
        let p = problem(n, m, &vals, true);
        let s = solve(&p, &QpSettings::default(), None);
        prop_assert!(s.is_optimal(), "{:?}", s.status);
        let best = enumerate(&p).expect("feasible by construction");
        prop_assert!((s.objective - best).abs() <= 1e-7 * (1.0 + best.abs()), "{} vs {}", s.objective, best);
        prop_assert!(s.kkt.max() <= 1e-8, "{:?}", s.kkt);
    }

    #[test]
    fn infeasible_problems_are_certified(n in 1usize..=4, m in 2usize..=6, vals in prop::collection::vec(-1.0f64..1.0, 64)) {
        let p = problem(n, m, &vals, false);
        prop_assume!(p.constraints.row(0).norm() > 1e-3);
        let s = solve(&p, &QpSettings::default(), None);
        let QpStatus::Infeasible { certificate } = &s.status else {
            return Err(TestCaseError::fail(format!("{:?}", s.status)));
        };
        let (combo, gap) = certificate.check(&p);
        prop_assert!(combo <= 1e-8, "combo {combo}");
        prop_assert!(gap > 0.0);
    }

    #[test]
    fn warm_start_is_consistent(n in 1usize..=4, m in 0usize..=6, vals in prop::collection::vec(-1.0f64..1.0, 64)) {
        let p = problem(n, m, &vals, true);
        let cold = solve(&p, &QpSettings::default(), None);
        let warm = solve(&p, &QpSettings::default(), Some(&cold.active));
        prop_assert!((cold.objective - warm.objective).abs() <= 1e-9 * (1.0 + cold.objective.abs()));
    }
}

#[test]
fn reference_matches_on_random_problems() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let vals: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = problem(3, 3, &vals, true);
        let s = solve(&p, &QpSettings::default(), None);
        let r = reference::dual_projected_gradient(&p, 1e-10, 400_000).unwrap();
        assert!(r.converged);
        assert!((p.objective(&r.x) - s.objective).abs() <= 1e-6 * (1.0 + s.objective.abs()));
    }
}
