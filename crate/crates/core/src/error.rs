use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("boson mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("mode grid needs at least one mode")]
    EmptyGrid,
    #[error("upper energy {e_max} must exceed the mass {mass}")]
    InvalidInterval { mass: f64, e_max: f64 },
    #[error("invalid form factor: {0}")]
    InvalidFormFactor(String),
    #[error("form factor has no tail metadata and is not asserted compactly supported")]
    Unclassifiable,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("cutoff list is empty")]
    EmptyCutoffList,
    #[error("invalid cutoff ladder: {0}")]
    InvalidCutoff(String),
    #[error("dimension {dim} exceeds the configured cap {cap}")]
    DimensionOverflow { dim: u128, cap: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix expected hermitian, deviation {deviation:e}")]
    NonHermitianResult { deviation: f64 },
    #[error("couplings do not commute, max commutator norm {deviation:e}")]
    NonCommutingCouplings { deviation: f64 },
    #[error("closed-form dressed vacuum disagrees with the series, deviation {deviation:e}")]
    ClosedFormMismatch { deviation: f64 },
    #[error("truncation tail {fraction:e} exceeds tolerance {tolerance:e}")]
    TruncationTail { fraction: f64, tolerance: f64 },
    #[error("linear solve failed, relative residual {residual:e}")]
    SolveFailure { residual: f64 },
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
