//! Crate-wide error type with stable machine-readable codes.

use thiserror::Error;

/// Errors raised by planning, simulation, and generation.
///
/// Scenario invariant *violations* are not errors; they are data reported by
/// [`crate::validate::validate_scenario`]. Errors here are conditions that
/// prevent an operation from producing a result at all.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown host `{0}`")]
    UnknownHost(String),

    #[error("executing host `{0}` has no held shell")]
    ExecShellNotHeld(String),

    #[error("exploit `{0}` is not feasible in the given state")]
    InfeasibleAction(String),

    #[error("value table exceeded the state cap of {cap} entries")]
    StateCapExceeded { cap: usize },

    #[error("scenario failed validation with {0} violation(s)")]
    InvalidScenario(usize),

    #[error("environment error: {0}")]
    Env(String),

    #[error("environment error, search aborted: {message}")]
    EnvAborted {
        message: String,
        /// Whatever the search had found before the abort.
        partial: Box<crate::mcts::SearchRun>,
    },

    #[error("precondition violated at execution time: {0}")]
    PreconditionViolation(String),

    #[error("instance too large for the oracle: {0}")]
    OracleCap(String),

    #[error("generator config is unsatisfiable: {0}")]
    UnsatisfiableConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed scenario file: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, suitable for scripting against.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownHost(_) => "UNKNOWN_HOST",
            Error::ExecShellNotHeld(_) => "EXEC_SHELL_NOT_HELD",
            Error::InfeasibleAction(_) => "INFEASIBLE_ACTION",
            Error::StateCapExceeded { .. } => "STATE_CAP_EXCEEDED",
            Error::InvalidScenario(_) => "INVALID_SCENARIO",
            Error::Env(_) => "ENV_ERROR",
            Error::EnvAborted { .. } => "ENV_ERROR",
            Error::PreconditionViolation(_) => "PRECONDITION_VIOLATION",
            Error::OracleCap(_) => "ORACLE_CAP",
            Error::UnsatisfiableConfig(_) => "UNSATISFIABLE_CONFIG",
            Error::Io(_) => "IO_ERROR",
            Error::Json(_) => "MALFORMED_JSON",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
