//! Scenario generation, traces and the batch verification suites.

pub mod scenario;
pub mod trace;
pub mod verify;

pub use scenario::{gen_scenario, Scenario, ScenarioKind};
pub use trace::Trace;
