//! Seeded initial platoons behind a constant-speed leader.
//!
//! Speeds are uniform in the admissible band (the leader's above
//! [`LEADER_SPEED_FLOOR`]); gaps are the safe distance plus an exponential surplus
//! with mean twice the steady-state spacing. Heterogeneous platoons scale each
//! vehicle's acceleration limits by a factor uniform in `[0.8, 1.2]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dynamics::{desired_spacing, safe_distance, PlatoonState, VehicleState};
use crate::error::{check, Result};
use crate::horizon::{ScenarioE1, BOUNDARY_TOL};
use crate::params::{GlobalParams, VehicleParams};

/// Lowest sampled leader speed (m/s); the relative discrepancy is undefined at zero.
pub const LEADER_SPEED_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScenarioKind {
    /// One CAV exactly on its safe-distance bound, at or above the leader speed.
    Boundary,
    /// One CAV in any admissible state.
    Single,
    /// `n` CAVs in any admissible state.
    Platoon { n: usize },
}

impl ScenarioKind {
    pub fn num_vehicles(&self) -> usize {
        match self {
            ScenarioKind::Boundary | ScenarioKind::Single => 1,
            ScenarioKind::Platoon { n } => *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub platoon: PlatoonState,
    pub vps: Vec<VehicleParams>,
    pub gp: GlobalParams,
}

impl Scenario {
    pub fn leader_speed(&self) -> f64 {
        self.platoon.leader.v
    }

    /// Single-follower view of CAV `i` (1-based): leader speed, own speed and gap to vehicle `i - 1`.
    pub fn follower(&self, i: usize) -> Result<ScenarioE1> {
        let lead = self.platoon.vehicle(i - 1);
        let cav = self.platoon.vehicle(i);
        ScenarioE1::new(self.leader_speed(), cav.v, lead.x - cav.x, self.vps[i - 1], self.gp)
    }

    pub fn followers(&self) -> Result<Vec<ScenarioE1>> {
        (1..=self.platoon.len()).map(|i| self.follower(i)).collect()
    }

    /// Re-checks the admission conditions of the scenario kind.
    pub fn check_admission(&self) -> Result<()> {
        let gp = &self.gp;
        let v0 = self.leader_speed();
        check(v0 >= gp.v_min && v0 <= gp.v_max, "scenario", || format!("leader speed {v0} outside the band"))?;
        let mut lead = self.platoon.leader;
        for (i, (cav, vp)) in self.platoon.cavs.iter().zip(&self.vps).enumerate() {
            check(cav.v >= gp.v_min && cav.v <= gp.v_max, "scenario", || format!("CAV {} speed {} outside the band", i + 1, cav.v))?;
            let gap = lead.x - cav.x;
            let need = safe_distance(cav.v, lead.v, vp, gp).max(safe_distance(cav.v, v0, vp, gp));
            check(gap >= need - BOUNDARY_TOL, "scenario", || format!("CAV {} gap {gap} below {need}", i + 1))?;
            lead = *cav;
        }
        if self.kind == ScenarioKind::Boundary {
            let sc = self.follower(1)?;
            check(sc.is_boundary(), "scenario", || "follower is not on its safe-distance bound".into())?;
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Generates a scenario; identical inputs give identical scenarios.
pub fn gen_scenario(kind: ScenarioKind, seed: u64, base: &VehicleParams, gp: &GlobalParams, heterogeneous: bool) -> Result<Scenario> {
    base.validate()?;
    gp.validate()?;
    let n = kind.num_vehicles();
    check(n >= 1, "n", || "at least one CAV is required".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vps: Vec<VehicleParams> = (0..n)
        .map(|_| {
            if heterogeneous {
                let (fa, fb) = (uniform(&mut rng, 0.8, 1.2), uniform(&mut rng, 0.8, 1.2));
                VehicleParams { a_min: base.a_min * fa, a_max: base.a_max * fb, ..*base }
            } else {
                *base
            }
        })
        .collect();
    let v0 = uniform(&mut rng, gp.v_min.max(LEADER_SPEED_FLOOR.min(gp.v_max)), gp.v_max);
    let leader = VehicleState::new(0.0, v0, 0.0);
    let mut cavs = Vec::with_capacity(n);
    let mut lead = leader;
    for vp in &vps {
        let (v, gap) = match kind {
            ScenarioKind::Boundary => {
                let v = uniform(&mut rng, v0, gp.v_max);
                (v, safe_distance(v, v0, vp, gp))
            }
            ScenarioKind::Single | ScenarioKind::Platoon { .. } => {
                let v = uniform(&mut rng, gp.v_min, gp.v_max);
                let floor = safe_distance(v, lead.v, vp, gp).max(safe_distance(v, v0, vp, gp));
                let mean = 2.0 * desired_spacing(v0, v0, vp, gp);
                let surplus = Exp::new(1.0 / mean).expect("positive rate").sample(&mut rng);
                (v, floor + surplus)
            }
        };
        let cav = VehicleState::new(lead.x - gap, v, 0.0);
        cavs.push(cav);
        lead = cav;
    }
    let scenario = Scenario { kind, seed, platoon: PlatoonState::new(leader, cavs, 0)?, vps, gp: *gp };
    scenario.check_admission()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vp() -> VehicleParams {
        VehicleParams { a_min: -5.0, a_max: 2.5, eps: 0.0, eta: 0.0, length: 5.0 }
    }

    fn gp() -> GlobalParams {
        GlobalParams { tau: 1.0, v_min: 0.0, v_max: 20.0, delta1: 3.0, delta2: 0.5, delta_margin: 2.0 }
    }

    #[test]
    fn boundary_gap_is_constructed_exactly() {
        for seed in 0..50 {
            let s = gen_scenario(ScenarioKind::Boundary, seed, &vp(), &gp(), false).unwrap();
            let cav = s.platoon.cavs[0];
            assert!(cav.v >= s.leader_speed());
            assert_eq!(-cav.x, safe_distance(cav.v, s.leader_speed(), &vp(), &gp()));
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let kind = ScenarioKind::Platoon { n: 3 };
        let a = gen_scenario(kind, 11, &vp(), &gp(), true).unwrap();
        let b = gen_scenario(kind, 11, &vp(), &gp(), true).unwrap();
        assert_eq!(a, b);
        let c = gen_scenario(kind, 12, &vp(), &gp(), true).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn platoon_followers_are_admissible() {
        for seed in 0..50 {
            let s = gen_scenario(ScenarioKind::Platoon { n: 3 }, seed, &vp(), &gp(), true).unwrap();
            assert_eq!(s.followers().unwrap().len(), 3);
        }
    }
}
