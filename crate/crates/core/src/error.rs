use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid layer: {0}")]
    InvalidLayer(String),

    #[error("unsupported layer: {0}")]
    UnsupportedLayer(String),

    #[error("invalid candidate: {0}")]
    InvalidCandidate(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("exact solver budget exceeded ({size} > {budget}); use the sliced estimator")]
    BudgetExceeded { size: usize, budget: usize },

    #[error("numeric error{}: {detail}", stage_suffix(.stage))]
    Numeric { stage: Option<usize>, detail: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

fn stage_suffix(stage: &Option<usize>) -> String {
    match stage {
        Some(s) => format!(" at stage {s}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn numeric(detail: impl Into<String>) -> Self {
        Error::Numeric { stage: None, detail: detail.into() }
    }

    /// Attaches a stage index to numeric errors that do not carry one yet.
    pub fn at_stage(self, stage: usize) -> Self {
        match self {
            Error::Numeric { stage: None, detail } => Error::Numeric { stage: Some(stage), detail },
            other => other,
        }
    }
}

pub(crate) fn invalid_arg(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
