//! Error taxonomy shared by the library and the command line front end.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the library.
///
/// Variants split into two families: invalid inputs (rejected before any
/// work happens) and numerical failures (detected while working). The
/// command line maps the first family to exit code 2 and the second to 3.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested model or parameter regime is not covered.
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// A statistical procedure received fewer samples than it needs.
    #[error("insufficient sampling: {0}")]
    InsufficientSampling(String),

    /// An object degenerated (empty chain, flat table, zero mass, ...).
    #[error("degenerate state: {0}")]
    DegenerateState(String),

    /// A linear or nonlinear system has no usable solution.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// The small-x startup of the coupled transform solver cannot meet the
    /// requested tolerance with the given grid origin.
    #[error("startup error: {0}")]
    Startup(String),

    /// A tail extrapolation (log-linear fit, power fit) failed its
    /// self-consistency check.
    #[error("tail estimation failed: {0}")]
    TailEstimation(String),

    /// An integral diverges for the supplied tail order or head exponent.
    #[error("divergent integral: {0}")]
    Divergence(String),

    /// Evaluation at or across a pole of the transform.
    #[error("pole: {0}")]
    Pole(String),

    /// The string coordinate change is not of bounded variation near the
    /// origin, so no string on a half line exists for this input.
    #[error("unbounded variation: {0}")]
    UnboundedVariation(String),

    /// An iteration failed to converge within its budget.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// Configuration file or flag validation failed.
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command line front end.
    ///
    /// 2 for rejected inputs, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::UnsupportedModel(_)
            | Error::Validation(_)
            | Error::Io(_)
            | Error::ConfigParse(_) => 2,
            Error::InsufficientSampling(_)
            | Error::DegenerateState(_)
            | Error::SingularSystem(_)
            | Error::Startup(_)
            | Error::TailEstimation(_)
            | Error::Divergence(_)
            | Error::Pole(_)
            | Error::UnboundedVariation(_)
            | Error::NonConvergence(_) => 3,
        }
    }
}
