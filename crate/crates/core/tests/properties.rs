//! Property tests of the model, the envelopes, the bounds, the maneuvers and the
//! receding-horizon controller.

use platoon::dynamics::{desired_spacing, safe_distance, step_cav, tracking_errors, PlatoonState, VehicleState};
use platoon::feasibility::{
    delta1_floor, g_slack, platoon_is_feasible, safety_upper_bound, step_platoon_with, Predecessor, FEAS_TOL,
};
use platoon::horizon::{rho_two, vehicle_bounds, DCoefficients, OutOfDomainPolicy, ScenarioE1, Sigma};
use platoon::maneuver::{self, switched_controls, PairState};
use platoon::mpc::{self, plan_violation, receding_horizon_run, HdvMotion, HdvPrediction, MpcStatus, MpcTemplate, MpcWeights, TerminalSet};
use platoon::params::{GlobalParams, VehicleParams};
use platoon::qp::QpSettings;
use platoon::sim::scenario::{gen_scenario, ScenarioKind};
use platoon::sim::trace::{read_csv, replay_rows};
use platoon::sim::verify::{random_mpc_problem, SuiteParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gp() -> GlobalParams {
    GlobalParams::default()
}

fn vp() -> VehicleParams {
    VehicleParams::default()
}

fn uncertain_vp(eps: f64, eta: f64) -> VehicleParams {
    VehicleParams { eps, eta, ..vp() }
}

/// Single follower on its safe-distance bound at speed `v1 >= v0`.
fn boundary(v0: f64, excess: f64) -> ScenarioE1 {
    ScenarioE1::boundary(v0, (v0 + excess).min(gp().v_max), vp(), gp()).unwrap()
}

fn kind(n: usize) -> ScenarioKind {
    ScenarioKind::Platoon { n }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn step_is_deterministic(x in -500.0..0.0f64, v in 0.0..20.0f64, u_prev in -5.0..2.5f64, u in -5.0..2.5f64,
                             eps in 0.0..0.05f64, eta in 0.0..0.2f64) {
        let s = VehicleState::new(x, v, u_prev);
        let p = uncertain_vp(eps, eta);
        let (a, b) = (step_cav(&s, u, &p, &gp()), step_cav(&s, u, &p, &gp()));
        prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
        prop_assert_eq!(a.v.to_bits(), b.v.to_bits());
    }

    #[test]
    fn step_without_uncertainty_is_a_double_integrator(x in -500.0..0.0f64, v in 0.0..20.0f64, u_prev in -5.0..2.5f64,
                                                       u in -5.0..2.5f64, tau in 0.05..1.5f64) {
        let g = GlobalParams { tau, ..gp() };
        let next = step_cav(&VehicleState::new(x, v, u_prev), u, &vp(), &g);
        prop_assert!((next.x - (x + tau * v + 0.5 * tau * tau * u)).abs() <= 1e-12 * (1.0 + x.abs()));
        prop_assert!((next.v - (v + tau * u)).abs() <= 1e-12 * (1.0 + v.abs()));
        prop_assert_eq!(next.u_prev, u);
    }

    #[test]
    fn coasting_telescopes(x in -500.0..0.0f64, v in 0.0..20.0f64, steps in 1usize..60) {
        let mut s = VehicleState::new(x, v, 0.0);
        for _ in 0..steps {
            s = step_cav(&s, 0.0, &vp(), &gp());
        }
        let expect = x + steps as f64 * gp().tau * v;
        prop_assert!((s.x - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
    }

    #[test]
    fn platoon_at_desired_spacing_has_zero_errors(v in 0.0..20.0f64, n in 1usize..5) {
        let leader = VehicleState::new(0.0, v, 0.0);
        let gap = desired_spacing(v, v, &vp(), &gp());
        let cavs = (1..=n).map(|i| VehicleState::new(-(i as f64) * gap, v, 0.0)).collect();
        let p = PlatoonState::new(leader, cavs, 0).unwrap();
        let e = tracking_errors(&p, &vec![vp(); n], &gp());
        prop_assert!(e.z.iter().all(|z| z.abs() <= 1e-12 * (1.0 + n as f64 * gap)));
        prop_assert!(e.z_prime.iter().all(|z| *z == 0.0));
    }

    #[test]
    fn desired_spacing_adds_the_margin(v in 0.0..20.0f64, margin in 0.0..5.0f64) {
        let g = GlobalParams { delta_margin: margin, ..gp() };
        prop_assert_eq!(safe_distance(v, v, &vp(), &g) + margin, desired_spacing(v, v, &vp(), &g));
    }

    #[test]
    fn every_grid_control_keeps_the_platoon_feasible(seed in any::<u64>(), n in 1usize..4, pick in 0usize..20,
                                                     leader_accel in -5.0..2.5f64) {
        let s = gen_scenario(kind(n), seed, &vp(), &gp(), false).unwrap();
        let mut state = s.platoon.clone();
        for _ in 0..10 {
            let v_next = state.leader.v + gp().tau * leader_accel;
            let a = if (gp().v_min..=gp().v_max).contains(&v_next) { leader_accel } else { 0.0 };
            let env = step_platoon_with(&state, a, &s.vps, &s.gp, |_, iv| iv.grid(20)[pick]);
            prop_assert!(env.intervals.iter().all(|iv| iv.non_empty));
            prop_assert!(platoon_is_feasible(&env.next, &s.vps, &s.gp));
            state = env.next;
        }
    }

    #[test]
    fn safety_bound_grows_with_the_gap(v_lead in 0.0..20.0f64, v in 0.0..20.0f64, accel in -5.0..2.5f64,
                                       extra in 0.0..50.0f64, more in 0.0..50.0f64) {
        let pred = Predecessor::new(VehicleState::new(0.0, v_lead, 0.0), accel);
        let near = -safe_distance(v, v_lead, &vp(), &gp()) - extra;
        let a = safety_upper_bound(&pred, &VehicleState::new(near, v, 0.0), &vp(), &gp());
        let b = safety_upper_bound(&pred, &VehicleState::new(near - more, v, 0.0), &vp(), &gp());
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn contraction_ratio_grows_with_discrepancy(v0 in 0.5..20.0f64, d1 in 0.0..5.0f64, d2 in 0.0..5.0f64) {
        let d = DCoefficients::new(v0, 0.0, gp().tau, vp().a_max, vp().a_min);
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        prop_assert!(d.at(lo) <= d.at(hi));
        prop_assert!(d.at(hi) < 1.0 && d.at(lo) > 0.0);
    }

    #[test]
    fn braking_steps_are_monotone(v0 in 1.0..19.0f64, e1 in 0.0..10.0f64, e2 in 0.0..10.0f64, brake in 1.0..8.0f64) {
        let (lo, hi) = (e1.min(e2), e1.max(e2));
        prop_assert!(rho_two(&boundary(v0, lo)) <= rho_two(&boundary(v0, hi)));
        let soft = VehicleParams { a_min: -brake, ..vp() };
        let hard = VehicleParams { a_min: -brake - 1.0, ..vp() };
        let v1 = (v0 + hi).min(gp().v_max);
        let on = |p: VehicleParams| ScenarioE1::boundary(v0, v1, p, gp()).unwrap();
        prop_assert!(rho_two(&on(hard)) <= rho_two(&on(soft)));
    }

    #[test]
    fn bounds_compose(v0 in 1.0..20.0f64, v1 in 0.0..20.0f64, surplus in 0.0..300.0f64) {
        let gap = safe_distance(v1, v0, &vp(), &gp()) + surplus;
        let sc = ScenarioE1::new(v0, v1, gap, vp(), gp()).unwrap();
        if let Ok(b) = vehicle_bounds(&sc, Sigma::DERIVED, OutOfDomainPolicy::Simulate) {
            prop_assert_eq!(b.rho, b.rho_1 + b.rho_2);
            prop_assert_eq!(b.p_e, b.rho + b.rho_t.total());
        }
    }

    #[test]
    fn shrink_law_stays_within_the_limits(v0 in 0.5..20.0f64, frac in 0.0..1.0f64) {
        let sc = boundary(v0, 0.0);
        let delta = frac * (gp().v_max / v0 - 1.0);
        let a = maneuver::shrink_law(&sc, delta);
        prop_assert!(a >= vp().a_min && a <= vp().a_max);
    }

    #[test]
    fn shrink_law_contracts_the_speed_excess_geometrically(v0 in 2.0..18.0f64, excess in 0.1..2.0f64) {
        let sc = boundary(v0, excess);
        let d = platoon::horizon::d_coefficients(&sc);
        let mut s = PairState::initial(&sc);
        for _ in 0..30 {
            let (u, clamped) = maneuver::shrink_control(&sc, &s);
            let next = s.advance(&sc, u);
            if !clamped {
                let expect = (s.cav.v - v0) * d.at(s.discrepancy(&sc));
                prop_assert!((next.cav.v - v0 - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            }
            s = next;
        }
    }

    #[test]
    fn switched_family_is_monotone_in_the_switch(v0 in 2.0..18.0f64, excess in 0.1..2.0f64) {
        let sc = boundary(v0, excess);
        let len = 60;
        let ends: Vec<f64> = (0..=40).map(|k| switched_controls(&sc, k as f64 * 0.25, len).1.spacing_offset(&sc)).collect();
        prop_assert!(ends.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{ends:?}");
    }

    #[test]
    fn emitted_sequences_replay_feasibly(v0 in 1.0..20.0f64, v1 in 0.0..20.0f64, surplus in 0.0..200.0f64) {
        let gap = safe_distance(v1, v0, &vp(), &gp()) + surplus;
        let sc = ScenarioE1::new(v0, v1, gap, vp(), gp()).unwrap();
        let Ok(seq) = maneuver::strategy_s1(&sc) else { return Ok(()) };
        let mut lead = VehicleState::new(0.0, v0, 0.0);
        let mut cav = VehicleState::new(-gap, v1, 0.0);
        for &u in &seq.controls {
            lead = step_cav(&lead, 0.0, &vp(), &gp());
            cav = step_cav(&cav, u, &vp(), &gp());
            prop_assert!(g_slack(&lead, &cav, &vp(), &gp()) >= -FEAS_TOL);
            prop_assert!(cav.v >= gp().v_min - FEAS_TOL && cav.v <= gp().v_max + FEAS_TOL);
        }
    }

    #[test]
    fn scenarios_respect_their_admission(seed in any::<u64>(), n in 1usize..5, het in any::<bool>()) {
        for k in [ScenarioKind::Boundary, ScenarioKind::Single, kind(n)] {
            let s = gen_scenario(k, seed, &vp(), &gp(), het).unwrap();
            prop_assert!(s.check_admission().is_ok());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn condensed_prediction_matches_rollout_and_warm_start_is_invariant(seed in any::<u64>()) {
        let params = SuiteParams { vp: VehicleParams { eps: 0.02, eta: 0.04, ..vp() }, ..SuiteParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_mpc_problem(&params, &mut rng, seed).unwrap();
        let settings = QpSettings::default();
        let cold = mpc::solve(&problem, &settings, None).unwrap();
        let flat: Vec<f64> = cold.controls.iter().flatten().copied().collect();
        let direct = problem.rollout(&flat);
        for (a, b) in cold.predicted_states.iter().flatten().zip(direct.iter().flatten()) {
            prop_assert!((a.x - b.x).abs() <= 1e-9 * (1.0 + b.x.abs()) && (a.v - b.v).abs() <= 1e-9);
        }
        if cold.status == MpcStatus::Optimal {
            prop_assert!(plan_violation(&problem, &flat) <= 1e-7);
            let warm = mpc::solve(&problem, &settings, Some(&cold.active)).unwrap();
            prop_assert_eq!(warm.status, MpcStatus::Optimal);
            prop_assert!((warm.objective - cold.objective).abs() <= 1e-7 * (1.0 + cold.objective.abs()));
            // No feasible random plan does better.
            let condensed = mpc::assemble(&problem).unwrap();
            for _ in 0..100 {
                let u: Vec<f64> = (0..flat.len()).map(|_| rng.gen_range(problem.vps[0].a_min..=problem.vps[0].a_max)).collect();
                if plan_violation(&problem, &u) <= 0.0 {
                    let value = condensed.objective(&nalgebra::DVector::from_vec(u));
                    prop_assert!(value >= cold.objective - 1e-9 * (1.0 + cold.objective.abs()));
                }
            }
        }
    }

    #[test]
    fn closed_loop_traces_replay(seed in any::<u64>(), n in 1usize..4, horizon in 2usize..8) {
        let p = VehicleParams { eps: 0.01, eta: 0.05, ..vp() };
        let g = GlobalParams { delta1: delta1_floor(&p, &gp()).max(gp().delta1), ..gp() };
        let s = gen_scenario(kind(n), seed, &p, &g, false).unwrap();
        let template = MpcTemplate {
            horizon,
            weights: MpcWeights::identity(n, 1.0),
            terminal: TerminalSet::default(),
            terminal_enabled: false,
            vps: s.vps.clone(),
            gp: s.gp,
            prediction: HdvPrediction::ConstantSpeed,
            settings: QpSettings::default(),
        };
        let trace = receding_horizon_run(&s.platoon, 6, &template, &HdvMotion::ConstantSpeed).unwrap();
        prop_assert!(trace.replay_error() <= 1e-9);
        prop_assert!(trace.states.iter().all(|st| platoon_is_feasible(st, &s.vps, &s.gp)));
        let mut csv = Vec::new();
        trace.write_csv(&mut csv).unwrap();
        let rows = read_csv(csv.as_slice()).unwrap();
        prop_assert!(replay_rows(&rows, &s.vps, &s.gp).unwrap() <= 1e-9);
    }
}
