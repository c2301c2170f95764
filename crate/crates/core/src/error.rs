use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("no recorded position at step {requested} (history covers {first}..={last})")]
    InsufficientHistory { requested: i64, first: i64, last: i64 },

    /// The constant-speed hold term divides by `v0 - v1(0)`, which vanishes.
    #[error("transition-time term is undefined: spacing deficit {deficit} m with zero closing speed")]
    DegenerateRate { deficit: f64 },

    /// The logarithm in the spacing-convergence bound has a non-positive argument.
    #[error("log argument {argument} is outside (0, 1]")]
    OutOfDomain { argument: f64 },

    #[error("strategy not applicable: {0}")]
    NotApplicable(String),

    #[error("no convergence within {steps} steps")]
    NoConvergence { steps: usize },

    #[error("control {control} at step {step} lies outside the feasible interval [{lo}, {hi}]")]
    Infeasible { step: usize, control: f64, lo: f64, hi: f64 },

    #[error("bisection could not bracket a root: terminal spacing error {low_end} (brake end), {high_end} (shrink end)")]
    NoSolution { low_end: f64, high_end: f64 },
}

pub(crate) fn check(cond: bool, name: &'static str, reason: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParams { name, reason: reason() })
    }
}
