use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CryoError>;

#[derive(Debug, Error)]
pub enum CryoError {
    /// Input outside the admissible set of a routine (bad parameters, bounds violated).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Pointwise evaluation outside the domain of a constitutive function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e}); try a smaller time step or a looser tolerance")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("linear solve failed after {iterations} iterations (relative residual {residual:.3e}): {reason}")]
    LinearSolveFailure {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("observed {quantity} order {observed:.3} below required {required:.2}")]
    OrderRegression {
        quantity: String,
        observed: f64,
        required: f64,
    },

    /// A time step of a run failed; carries the step index and, when available, a state dump.
    #[error("step {step} (t = {time:.6}) failed{}: {source}", dump_note(.dump))]
    StepFailure {
        step: usize,
        time: f64,
        dump: Option<PathBuf>,
        #[source]
        source: Box<CryoError>,
    },

    /// A study or reproducibility assertion did not hold.
    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

fn dump_note(dump: &Option<PathBuf>) -> String {
    match dump {
        Some(p) => format!(" (state dumped to {})", p.display()),
        None => String::new(),
    }
}

impl CryoError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CryoError::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CryoError::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, looking through step failures.
    pub fn root(&self) -> &CryoError {
        match self {
            CryoError::StepFailure { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            CryoError::InvalidInput(_) | CryoError::Domain(_) | CryoError::Config(_) => 2,
            CryoError::Json(_) => 2,
            CryoError::NonConvergence { .. } | CryoError::LinearSolveFailure { .. } => 3,
            CryoError::OrderRegression { .. } => 4,
            CryoError::Io { .. } | CryoError::Csv(_) => 1,
            CryoError::CheckFailed(_) => 5,
            CryoError::StepFailure { .. } => unreachable!("root() never returns a step failure"),
        }
    }
}
