use thiserror::Error;

/// Errors raised by the models, geometry queries and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no admissible control: {0}")]
    Feasibility(String),

    #[error("invalid arguments: {0}")]
    InvalidArguments(String),

    #[error("assumption violation: {}", failed.join(", "))]
    AssumptionViolation {
        failed: Vec<String>,
        report: Box<crate::control_model::AssumptionReport>,
    },

    #[error("normal undefined at ({x}, {y}): {reason}")]
    UndefinedNormal { x: f64, y: f64, reason: String },

    #[error("node {node} has no admissible control (time step {dt} too large for the constraint box?)")]
    NoAdmissibleControl { node: usize, dt: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("extrapolation unstable: gaps {gaps:?}")]
    ExtrapolationUnstable { gaps: Vec<f64> },

    #[error("Hamiltonian of piece {piece} failed the coercivity probe")]
    NonCoerciveHamiltonian { piece: usize },

    #[error("level {level} is below the minimum {e0} of the Hamiltonian")]
    EmptyLevelSet { level: f64, e0: f64 },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("point ({x}, {y}) lies outside the field window")]
    OutOfWindow { x: f64, y: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
