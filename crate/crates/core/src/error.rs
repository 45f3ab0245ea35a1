use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, mismatched dimensions, malformed config.
    #[error("configuration error: {0}")]
    Config(String),

    /// The normal matrix `AᵀWA + CᵀΛC` is singular to working precision.
    #[error("singular normal matrix (condition estimate {condition:e})")]
    SingularNormalMatrix { condition: f64 },

    /// A state entry became non-finite or exceeded the divergence bound.
    #[error("trajectory diverged at t = {time}{}", step.map(|s| format!(" (step {s})")).unwrap_or_default())]
    Divergence { step: Option<usize>, time: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("eigenvalue estimate undefined: {0}")]
    UndefinedEstimate(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("non-finite value while differentiating the map: {0}")]
    Differentiation(String),

    #[error("unknown preset `{0}` (expected one of fig1, fig2, fig3, fig4, fig5)")]
    UnknownPreset(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Attaches a step index to a divergence error; other variants pass through.
    pub fn at_step(self, k: usize) -> Self {
        match self {
            Error::Divergence { time, .. } => Error::Divergence { step: Some(k), time },
            other => other,
        }
    }
}
