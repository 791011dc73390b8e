use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("oracle protocol error: {0}")]
    ProtocolError(String),

    /// An oracle call failed while scoring perturbation `index`.
    #[error("oracle failed on perturbation {index}: {source}")]
    Observation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("could not sample a full-rank perturbation design after {retries} retries")]
    DegenerateDesign { retries: usize },

    #[error("singular design matrix (lambda = 0)")]
    SingularDesign,

    #[error("could not parse rank line: {reason}")]
    RankParseError { reason: String, raw: String },

    #[error("fewer than 3 distinct scores ({distinct})")]
    InsufficientSeparation { distinct: usize },

    #[error("no passages retrieved for the shared context")]
    EmptyContext,

    #[error("could not parse synthesized data: {0}")]
    SynthesisParseError(String),

    #[error("negative gain {0}")]
    InvalidGain(f64),

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("missing input file {0}")]
    MissingInput(PathBuf),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage and observation wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Observation { source, .. } => source.root(),
            other => other,
        }
    }

    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidConfig(_) => "invalid_config",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::OracleUnavailable(_) => "oracle_unavailable",
            Error::ProtocolError(_) => "protocol_error",
            Error::Observation { .. } => "observation",
            Error::DegenerateDesign { .. } => "degenerate_design",
            Error::SingularDesign => "singular_design",
            Error::RankParseError { .. } => "rank_parse_error",
            Error::InsufficientSeparation { .. } => "insufficient_separation",
            Error::EmptyContext => "empty_context",
            Error::SynthesisParseError(_) => "synthesis_parse_error",
            Error::InvalidGain(_) => "invalid_gain",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::MissingInput(_) => "missing_input",
            Error::Stage { .. } => "stage",
            Error::Parse { .. } => "parse",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::MissingInput(_) => 2,
            Error::OracleUnavailable(_) => 3,
            Error::InvalidInput(_)
            | Error::InvalidConfig(_)
            | Error::Parse { .. }
            | Error::Json(_)
            | Error::InvalidGain(_)
            | Error::Checkpoint(_) => 4,
            _ => 1,
        }
    }
}
