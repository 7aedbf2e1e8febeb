use thiserror::Error;

/// Errors produced by the filtering engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("scenario failed validation: {}", .0.join("; "))]
    ValidationFailed(Vec<String>),

    #[error("interval [{0}, {1}] is not a single time-grid cell")]
    MisalignedInterval(f64, f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value at time step {step} ({what})")]
    NonFinite { step: usize, what: String },

    #[error("CFL condition violated: a*dt/dx^2 = {ratio:.4} > 0.5")]
    Cfl { ratio: f64 },

    #[error("filter collapse")]
    FilterCollapse,

    #[error("oracle requires linear-Gaussian scenario")]
    NotLinearGaussian,

    #[error("gamma(t) is singular at t = {0}")]
    SingularGamma(f64),

    #[error("covariance lost positive semi-definiteness (min eigenvalue {0:e})")]
    CovarianceNotPsd(f64),

    #[error("unsupported initial law: {0}")]
    UnsupportedInitialLaw(String),

    #[error("heat kernel requires eps > 0, got {0}")]
    NonPositiveEpsilon(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
