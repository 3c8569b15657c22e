use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "query budget exceeded for learner {learner} round {round} ({function}): budget {budget}"
    )]
    BudgetExceeded {
        learner: usize,
        round: usize,
        function: &'static str,
        budget: u32,
    },

    #[error("query point outside the decision set of learner {learner} at round {round} (excess {excess:e})")]
    InfeasibleQuery {
        learner: usize,
        round: usize,
        excess: f64,
    },

    #[error("invariant violated at round {round}: {message}")]
    Invariant { round: usize, message: String },

    #[error("offline solver did not converge: {message} (objective {objective}, max violation {max_violation:e})")]
    Solver {
        message: String,
        objective: f64,
        max_violation: f64,
        best: Vec<f64>,
    },

    #[error("{0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
