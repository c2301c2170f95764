//! TOML configuration. Every section is optional; missing keys take the
//! documented defaults and unknown keys are rejected with their full path.

use std::path::Path;

use platoon::horizon::Sigma;
use platoon::maneuver::Tolerance;
use platoon::mpc::{MpcWeights, TerminalSet};
use platoon::params::{GlobalParams, NewellParams, VehicleParams};
use serde::{Deserialize, Serialize};

/// Load failures, all reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub key: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.path)?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, ":{l}:{c}")?;
        }
        if let Some(k) = &self.key {
            write!(f, ": key `{k}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Diagonal tracking weights shared by every vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    pub q_z: f64,
    pub q_zp: f64,
    pub omega1: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { q_z: 1.0, q_zp: 1.0, omega1: 1.0 }
    }
}

impl WeightConfig {
    pub fn for_vehicles(&self, n: usize) -> MpcWeights {
        MpcWeights::diagonal(n, self.q_z, self.q_zp, self.omega1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonConfig {
    /// Fixed prediction horizon; when absent the blended lower bound is used.
    pub prediction: Option<usize>,
    /// Blend between the summed (`0`) and the largest (`1`) per-vehicle bound.
    pub lambda: f64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self { prediction: None, lambda: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKindConfig {
    /// One CAV on its safe-distance bound.
    Boundary,
    /// One CAV in any admissible state.
    Single,
    /// `n` CAVs in admissible states.
    Platoon,
}

/// Explicit initial platoon: leader speed, then per-CAV speeds and gaps to the vehicle ahead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPlatoon {
    pub leader_speed: f64,
    pub speeds: Vec<f64>,
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKindConfig,
    pub n: usize,
    pub heterogeneous: bool,
    /// Overrides the sampled platoon.
    pub explicit: Option<ExplicitPlatoon>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self { kind: ScenarioKindConfig::Platoon, n: 2, heterogeneous: false, explicit: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub samples: usize,
    pub rollout_steps: usize,
    pub grid_points: usize,
    /// Blend weights swept by the platoon suite.
    pub lambdas: Vec<f64>,
    pub tol: Tolerance,
    /// Simulated steps per prediction step in the platoon suite and `mpc`.
    pub run_factor: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 200,
            rollout_steps: 50,
            grid_points: 20,
            lambdas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            tol: Tolerance::default(),
            run_factor: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub global: GlobalParams,
    /// One block per CAV; a single block applies to every CAV.
    pub vehicles: Vec<VehicleParams>,
    pub weights: WeightConfig,
    pub terminal: TerminalSet,
    pub newell: NewellParams,
    pub sigma: Sigma,
    pub horizon: HorizonConfig,
    pub scenario: ScenarioConfig,
    pub experiment: ExperimentConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            global: GlobalParams::default(),
            vehicles: vec![VehicleParams::default()],
            weights: WeightConfig::default(),
            terminal: TerminalSet::default(),
            newell: NewellParams::default(),
            sigma: Sigma::DERIVED,
            horizon: HorizonConfig::default(),
            scenario: ScenarioConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

impl Config {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let located = |e: &toml::de::Error, key: Option<String>| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unzip();
            ConfigError { path: origin.into(), key, line, column, message: e.message().into() }
        };
        let de = toml::de::Deserializer::parse(text).map_err(|e| located(&e, None))?;
        let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            located(e.inner(), (key != ".").then_some(key))
        })?;
        config.validate().map_err(|(key, message)| ConfigError {
            path: origin.into(),
            key: Some(key),
            line: None,
            column: None,
            message,
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.display().to_string(),
            key: None,
            line: None,
            column: None,
            message: e.to_string(),
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Checks every block; the error names the offending key.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let wrap = |section: &str| {
            let section = section.to_string();
            move |e: platoon::Error| match e {
                platoon::Error::InvalidParams { name, reason } => (format!("{section}.{name}"), reason),
                other => (section.clone(), other.to_string()),
            }
        };
        self.global.validate().map_err(wrap("global"))?;
        if self.vehicles.is_empty() {
            return Err(("vehicles".into(), "at least one vehicle block is required".into()));
        }
        for (i, vp) in self.vehicles.iter().enumerate() {
            vp.validate().map_err(wrap(&format!("vehicles[{i}]")))?;
        }
        self.terminal.validate().map_err(wrap("terminal"))?;
        self.newell.validate().map_err(wrap("newell"))?;
        let w = &self.weights;
        if !(w.q_z >= 0.0 && w.q_zp >= 0.0 && w.omega1 >= 0.0) {
            return Err(("weights".into(), "weights must be non-negative".into()));
        }
        if let Sigma::Fixed(m) = self.sigma {
            if !m.is_finite() {
                return Err(("sigma".into(), "must be finite or \"derived\"".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.horizon.lambda) {
            return Err(("horizon.lambda".into(), format!("must lie in [0, 1], got {}", self.horizon.lambda)));
        }
        if self.horizon.prediction == Some(0) {
            return Err(("horizon.prediction".into(), "must be at least 1".into()));
        }
        if let Some(bad) = self.experiment.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(("experiment.lambdas".into(), format!("{bad} outside [0, 1]")));
        }
        if self.experiment.grid_points < 2 {
            return Err(("experiment.grid_points".into(), "must be at least 2".into()));
        }
        if self.scenario.n == 0 {
            return Err(("scenario.n".into(), "must be at least 1".into()));
        }
        if let Some(e) = &self.scenario.explicit {
            if e.speeds.len() != e.gaps.len() || e.speeds.is_empty() {
                return Err(("scenario.explicit".into(), "speeds and gaps must be non-empty and of equal length".into()));
            }
        }
        let t = &self.experiment.tol;
        if !(t.spacing > 0.0 && t.speed > 0.0) {
            return Err(("experiment.tol".into(), "tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Parameters of CAV `i` (0-based).
    pub fn vehicle(&self, i: usize) -> VehicleParams {
        *self.vehicles.get(i).unwrap_or(&self.vehicles[self.vehicles.len() - 1])
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("", "mem").unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn partial_section_keeps_other_defaults() {
        let c = Config::from_toml("[global]\ntau = 0.5\n", "mem").unwrap();
        assert_eq!(c.global.tau, 0.5);
        assert_eq!(c.global.v_max, 20.0);
    }

    #[test]
    fn unknown_key_is_named_with_its_path() {
        let e = Config::from_toml("[global]\ntau = 1.0\nspeed_limit = 3\n", "mem").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("global.speed_limit"));
        assert!(e.message.contains("speed_limit"), "{e}");
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn invalid_value_names_the_key() {
        let e = Config::from_toml("[[vehicles]]\na_min = 1.0\n", "mem").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("vehicles[0].a_min"));
    }

    #[test]
    fn sigma_accepts_number_or_keyword() {
        assert_eq!(Config::from_toml("sigma = 1.5", "mem").unwrap().sigma, Sigma::Fixed(1.5));
        assert!(Config::from_toml("sigma = \"derived\"", "mem").unwrap().sigma.is_derived());
    }

    #[test]
    fn echo_round_trips() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml(), "echo").unwrap(), c);
    }
}
