use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("position {x} outside [0, {ell}]")]
    OutOfDomain { x: f64, ell: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("inconsistent essential dof map: {0}")]
    SingularAssembly(String),

    #[error("Newton iteration did not converge at t = {t} (residual {residual:e} after {iterations} iterations)")]
    NewtonDivergence {
        t: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("pencil dimension {dim} exceeds dense eigensolver cap {cap}; use a shift-invert solver targeting the imaginary axis")]
    DimensionOverCap { dim: usize, cap: usize },

    #[error("mass matrix is not positive definite")]
    MassNotDefinite,

    #[error("fit window holds {found} samples, at least {required} required")]
    InsufficientSamples { found: usize, required: usize },

    #[error("nonpositive energy {value:e} at t = {t}")]
    NonPositiveEnergy { t: f64, value: f64 },

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("ensemble has {found} members, at least {required} required")]
    EnsembleTooSmall { found: usize, required: usize },

    #[error("ensemble did not reach its plateau by t = {t_final}")]
    PlateauNotReached { t_final: f64 },
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
