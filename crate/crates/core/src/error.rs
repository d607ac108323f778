use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("fractional order {0} outside (0, 1]")]
    InvalidOrder(f64),
    #[error("invalid size: {0}")]
    InvalidSize(&'static str),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coefficient lives on a different mesh ({found} nodes, mesh has {expected})")]
    MeshMismatch { expected: usize, found: usize },
    #[error("coefficient must be strictly positive (min nodal value {0})")]
    NonPositiveCoefficient(f64),
    #[error("matrix factorization failed at pivot {0}")]
    Factorization(usize),
    #[error("invalid box bounds [{0}, {1}]")]
    InvalidBounds(f64, f64),
    #[error("grids are not nested: {0}")]
    NonNestedGrid(&'static str),
    #[error("invalid observation window start {0}")]
    InvalidWindow(f64),
    #[error("optimizer stalled: steepest-descent direction is not a descent direction")]
    Stalled,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}
