use thiserror::Error;

/// Errors raised by the network, spline and baseline routines.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("neuron scale must be positive, got {0}")]
    InvalidScale(f64),

    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("window lower bound {lo} exceeds upper bound {hi}")]
    InvalidWindow { lo: f64, hi: f64 },

    #[error("anchor {anchor} must lie strictly left of the first knot {first_knot}")]
    InvalidAnchor { anchor: f64, first_knot: f64 },

    #[error("argument {0} outside the function domain")]
    DomainError(f64),

    #[error("density diverges at {0}")]
    Divergent(f64),

    #[error("breakpoint of neuron {neuron} lies within tolerance of datapoint {point}")]
    BoundaryBreakpoint { neuron: usize, point: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("datapoint {0} is not interior")]
    NotInterior(usize),

    #[error("neuron {0} has zero input weight")]
    ZeroInputWeight(usize),

    #[error("empty input")]
    EmptyInput,

    #[error("duplicate x coordinate {0}")]
    DuplicateX(f64),

    #[error("target is not in the column space (relative residual {0:e})")]
    Infeasible(f64),

    #[error("piece count {k} out of range 1..={n}")]
    PiecesOutOfRange { k: usize, n: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
