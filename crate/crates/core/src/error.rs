use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A single violated parameter constraint, e.g. `lambda > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintViolation {
    pub parameter: String,
    pub constraint: String,
    pub value: String,
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: constraint `{}` violated (got {})",
            self.parameter, self.constraint, self.value
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", join_violations(.0))]
    Constraint(Vec<ConstraintViolation>),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("insufficient events: found {count}, need at least {required}")]
    InsufficientEvents { count: usize, required: usize },

    #[error("insufficient history: {rounds} rounds recorded, need at least {required}")]
    InsufficientHistory { rounds: usize, required: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("malformed input {path}: {reason}")]
    Input { path: String, reason: String },

    #[error("{}: {source}", stage_label(*.replica, .stage))]
    Stage {
        replica: Option<usize>,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[ConstraintViolation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn stage_label(replica: Option<usize>, stage: &str) -> String {
    match replica {
        Some(r) => format!("replica {r}, stage {stage}"),
        None => format!("stage {stage}"),
    }
}

impl Error {
    pub fn at_stage(self, replica: Option<usize>, stage: &'static str) -> Self {
        Error::Stage {
            replica,
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 config error, 3 insufficient events, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Constraint(_) | Error::ConfigParse(_) => 2,
            Error::InsufficientEvents { .. } => 3,
            _ => 1,
        }
    }
}
