//! Platoon-centred model predictive control with executable feasibility theory.
//!
//! The crate is organised bottom-up:
//!
//! * [`params`], [`dynamics`]: parameter blocks, CAV/HDV motion and spacing algebra.
//! * [`feasibility`]: the closed-form one-step control envelope of a follower.
//! * [`horizon`]: step-count and prediction-horizon lower bounds.
//! * [`maneuver`]: constructive control sequences that realise those bounds.
//! * [`qp`], [`mpc`]: condensed quadratic program and receding-horizon loop.
//! * [`sim`]: scenario generation, verification suites and traces.

pub mod dynamics;
pub mod error;
pub mod feasibility;
pub mod horizon;
pub mod maneuver;
pub mod mpc;
pub mod params;
pub mod qp;
pub mod sim;

pub use error::{Error, Result};
