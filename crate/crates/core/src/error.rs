use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no generic channel after {rejects} consecutive draws")]
    GenericityFailure { rejects: usize },

    #[error("channel is not generic: {0}")]
    NonGenericChannel(String),

    #[error("degenerate coefficient: {0}")]
    DegenerateCoefficients(String),

    #[error("power must be finite and at least 1, got {0}")]
    InvalidPower(f64),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("slope fit needs at least 4 increasing points spanning 4 decades: {0}")]
    InsufficientGrid(String),

    #[error("impossible zero pattern in end-to-end matrix [[{0}, {1}], [{2}, {3}]]")]
    ImpossiblePattern(f64, f64, f64, f64),

    #[error("state tests disagree at slot {slot}: {detail}")]
    ClassificationMismatch { slot: usize, detail: String },

    #[error("covariance is singular or not positive semidefinite: {0}")]
    SingularCovariance(String),

    #[error("matrix is not invertible: {0}")]
    SingularMatrix(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable machine-readable name used in `error.json`.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::GenericityFailure { .. } => "GenericityFailure",
            Error::NonGenericChannel(_) => "NonGenericChannel",
            Error::DegenerateCoefficients(_) => "DegenerateCoefficients",
            Error::InvalidPower(_) => "InvalidPower",
            Error::LengthMismatch(_) => "LengthMismatch",
            Error::InsufficientGrid(_) => "InsufficientGrid",
            Error::ImpossiblePattern(..) => "ImpossiblePattern",
            Error::ClassificationMismatch { .. } => "ClassificationMismatch",
            Error::SingularCovariance(_) => "SingularCovariance",
            Error::SingularMatrix(_) => "SingularMatrix",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}
