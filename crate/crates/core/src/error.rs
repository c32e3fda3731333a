use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants are grouped so that callers (the CLI in particular) can map them
/// onto configuration, data-compatibility and numerical failure classes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("model configuration error: {0}")]
    Config(String),

    #[error("kernel evaluation at t={t} produced an invalid entry (s = {s:?})")]
    Kernel { t: usize, s: Vec<f64> },

    /// A positive count was observed where the model assigns zero intensity.
    #[error("observation at step {step}, entry {index:?} is positive but its intensity is zero")]
    Incompatible { step: usize, index: Vec<usize> },

    /// Data whose shape does not fit the model.
    #[error("data do not match the model: {0}")]
    Mismatch(String),

    #[error("filter produced a non-finite intensity at step {step}")]
    Divergence { step: usize },

    #[error("incidence filtering requires survival 1 and zero immigration (violated at t={t})")]
    CaseRestriction { t: usize },

    #[error("support mismatch at step {step}, entry {index:?}: limit intensity vanishes where the reference does not")]
    SupportMismatch { step: usize, index: Vec<usize> },

    #[error("per-capita limits are not declared for this model")]
    MissingLimits,

    #[error("state space too large: {0}")]
    StateSpace(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by data that the model cannot have produced.
    pub fn is_incompatibility(&self) -> bool {
        matches!(
            self,
            Error::Incompatible { .. }
                | Error::Mismatch(_)
                | Error::CaseRestriction { .. } | Error::SupportMismatch { .. }
        )
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Kernel { .. }
                | Error::Divergence { .. }
                | Error::Optimization(_)
                | Error::StateSpace(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
