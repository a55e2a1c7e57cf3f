use thiserror::Error;

/// Errors raised by the numerical core.
///
/// The variants split into user errors (bad input, malformed documents) and
/// numerical failures; [`Error::is_user_error`] tells them apart so front
/// ends can map them to distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degree overflow: degree {degree} exceeds dimension {dim}")]
    DegreeOverflow { degree: usize, dim: usize },

    #[error("invalid degree {degree} for {op}")]
    InvalidDegree { degree: usize, op: &'static str },

    #[error("exact derivative requested but the form carries no jacobian")]
    MissingJacobian,

    #[error("non-finite value encountered at {point:?}: {what}")]
    NonFinite { point: Vec<f64>, what: String },

    #[error("singular form at t={t:?}, x={point:?} (smallest singular value {sigma_min:e})")]
    SingularForm {
        point: Vec<f64>,
        t: Option<f64>,
        sigma_min: f64,
    },

    #[error("quadrature did not converge within depth {depth} (estimate {estimate:e}, error {error:e})")]
    QuadratureDivergence {
        depth: usize,
        estimate: f64,
        error: f64,
    },

    #[error("ray from the origin to {point:?} meets the excluded set of the form")]
    SingularRay { point: Vec<f64> },

    #[error("point {point:?} lies inside the excluded set of the form")]
    ExcludedPoint { point: Vec<f64> },

    #[error("slice primitive required: residual |a - d(Ia)| = {residual:e} at {point:?}")]
    MissingSlicePrimitive { point: Vec<f64>, residual: f64 },

    #[error("primitive mismatch: |d sigma - omega_dot| = {residual:e} at t={t}, x={point:?}")]
    PrimitiveMismatch {
        point: Vec<f64>,
        t: f64,
        residual: f64,
    },

    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unbound variable `{name}` at byte {position}")]
    UnboundVariable { name: String, position: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("contact condition violated at {point:?} (volume {volume:e})")]
    NotContact { point: Vec<f64>, volume: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("self-test `{check}` of case `{case}` failed: {detail}")]
    SelfTest { case: String, check: String, detail: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by the caller's input rather than by numerics.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Syntax { .. }
                | Error::UnboundVariable { .. }
                | Error::Schema(_)
                | Error::Index(_)
                | Error::InvalidParameter(_)
                | Error::DimensionMismatch { .. }
                | Error::DegreeOverflow { .. }
                | Error::InvalidDegree { .. }
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
