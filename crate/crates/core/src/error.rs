use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the numerical engine.
///
/// Variants fall into two families: configuration/validation failures (a
/// parameter violates an invariant before any computation starts) and
/// numerical failures (a computation ran but its result cannot be trusted).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("kernel truncation: minimum value {min_value:e} below ripple tolerance {tolerance:e}")]
    Truncation { min_value: f64, tolerance: f64 },

    #[error("spectral integral diverges (tail slope {slope:.6})")]
    Divergent { slope: f64 },

    #[error("tail extrapolation inconclusive: {0}")]
    Inconclusive(String),

    #[error("noise synthesis failed: {0}")]
    Synthesis(String),

    #[error("blow-up at step {step} (replicate {replicate}): sup-norm {sup_norm:e}")]
    BlowUp {
        step: usize,
        replicate: u64,
        sup_norm: f64,
    },

    #[error("Picard iteration did not converge in {iterations} iterations; residual trace {residuals:?}")]
    PicardNonConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("insufficient resolution: {usable} usable scales, need at least {required}")]
    InsufficientResolution { usable: usize, required: usize },

    #[error("ellipticity violated: min sigma {min_sigma:e} on probe range")]
    Ellipticity { min_sigma: f64 },

    #[error("insufficient samples: {found} given, need at least {required}")]
    InsufficientSamples { found: usize, required: usize },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Domain(_) => "domain",
            Error::Configuration(_) => "configuration",
            Error::Truncation { .. } => "truncation",
            Error::Divergent { .. } => "divergent",
            Error::Inconclusive(_) => "inconclusive",
            Error::Synthesis(_) => "synthesis",
            Error::BlowUp { .. } => "blow_up",
            Error::PicardNonConvergence { .. } => "picard_non_convergence",
            Error::InsufficientResolution { .. } => "insufficient_resolution",
            Error::Ellipticity { .. } => "ellipticity",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::Consistency(_) => "consistency",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Toml(_) => "config_parse",
        }
    }

    /// Process exit status used by the command-line front end:
    /// 2 for validation failures, 3 for numerical consistency failures,
    /// 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. }
            | Error::Domain(_)
            | Error::Configuration(_)
            | Error::Ellipticity { .. }
            | Error::InsufficientSamples { .. }
            | Error::Toml(_) => 2,
            Error::Truncation { .. }
            | Error::Divergent { .. }
            | Error::Inconclusive(_)
            | Error::Synthesis(_)
            | Error::BlowUp { .. }
            | Error::PicardNonConvergence { .. }
            | Error::InsufficientResolution { .. }
            | Error::Consistency(_) => 3,
            Error::Io(_) | Error::Json(_) => 1,
        }
    }
}
