use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
///
/// Every variant maps to a stable name (see [`Error::name`]) that the CLI
/// prints alongside the message.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),
    #[error("point outside the map domain ({0})")]
    DomainViolation(String),
    #[error("unknown map `{0}`")]
    NotFound(String),
    #[error("dimension mismatch: {0}")]
    DimensionError(String),
    #[error("no sample point fell inside the domain")]
    EmptySample,
    #[error("tangent map is rank deficient at {0:?}")]
    SingularPoint(Vec<f64>),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("start point does not cover the base path: residual {0:e}")]
    BadStart(f64),
    #[error("step size collapsed at {0}")]
    StepCollapse(String),
    #[error("invalid surface: {0}")]
    InvalidSurface(String),
    #[error("invalid curve family: {0}")]
    InvalidFamily(String),
    #[error("invalid cell complex: {0}")]
    InvalidComplex(String),
    #[error("radius {0} exceeds the meshed extent {1}")]
    OutOfExtent(f64, f64),
}

impl Error {
    /// Stable identifier of the error kind.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::DegenerateFrame(_) => "DegenerateFrame",
            Error::DomainViolation(_) => "DomainViolation",
            Error::NotFound(_) => "NotFound",
            Error::DimensionError(_) => "DimensionError",
            Error::EmptySample => "EmptySample",
            Error::SingularPoint(_) => "SingularPoint",
            Error::Unsupported(_) => "Unsupported",
            Error::BadStart(_) => "BadStart",
            Error::StepCollapse(_) => "StepCollapse",
            Error::InvalidSurface(_) => "InvalidSurface",
            Error::InvalidFamily(_) => "InvalidFamily",
            Error::InvalidComplex(_) => "InvalidComplex",
            Error::OutOfExtent(..) => "OutOfExtent",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
