use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are split into two families: input problems (bad shapes, invalid
/// models, malformed files) and internal failures that indicate a bug or a
/// numerical breakdown. The CLI maps the first family to exit code 1 and the
/// second to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration over {n} coordinates exceeds the limit of {limit}")]
    EnumerationTooLarge { n: usize, limit: usize },

    #[error("problem with {n} state-action pairs exceeds the dense solver limit of {limit}")]
    ProblemTooLarge { n: usize, limit: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("linear program reported {0}; the assembled LP should be feasible and bounded")]
    LpStatus(&'static str),

    #[error("fixed point for the iteration bound did not converge after {0} rounds")]
    NoConvergence(usize),

    #[error(
        "stochastic subgradient norm {norm} exceeds the bound K = {bound} at iteration {iteration}"
    )]
    GradientBound {
        iteration: usize,
        norm: f64,
        bound: f64,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the failure stems from user input rather than from the
    /// library itself.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::DimensionMismatch { .. }
            | Error::InvalidModel(_)
            | Error::InvalidArgument(_)
            | Error::EnumerationTooLarge { .. }
            | Error::ProblemTooLarge { .. }
            | Error::Parse(_)
            | Error::Json(_)
            | Error::Io(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
