use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("unsupported finite-difference order {0} (expected 1, 2 or 4)")]
    UnsupportedOrder(u32),
    #[error("argument must be positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("field is not strictly positive: min = {min}")]
    NonPositiveField { min: f64 },
    #[error("grid mismatch: expected n = {expected}, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("invalid mobility: {0}")]
    InvalidMobility(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid noise basis: {0}")]
    InvalidNoise(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("singular linear system: {0}")]
    Singular(String),
}
