use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("basis is not closed under site reversal (missing image of {0})")]
    NotClosedUnderReversal(String),

    #[error("tolerance {tolerance:.3e} is not below the smallest nonzero energy gap {gap:.3e}")]
    AmbiguousTolerance { tolerance: f64, gap: f64 },

    #[error("fragment dimension exceeded cap of {cap}")]
    FragmentTooLarge { cap: usize },

    #[error("unsupported length L={len}: {reason}")]
    UnsupportedLength { len: usize, reason: String },

    #[error("degenerate energy denominator {denominator:.3e} below floor {floor:.3e}")]
    DegenerateDenominator { denominator: f64, floor: f64 },

    #[error("configurations {0} and {1} do not differ by a single NN or NNN exchange")]
    NotAnExchange(String, String),

    #[error("regime mismatch: fragment built for {fragment}, parameters specify {params}")]
    RegimeMismatch { fragment: String, params: String },

    #[error("dimension {dim} exceeds cap {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },

    #[error("eigensolver failed: {0}")]
    Solver(String),

    #[error("eigensolver residual {residual:.3e} above threshold {threshold:.3e}")]
    Residual { residual: f64, threshold: f64 },

    #[error("need at least {needed} distinct levels, got {got}")]
    TooFewLevels { needed: usize, got: usize },

    #[error("state normalization deficit {0:.3e}")]
    Normalization(f64),

    #[error("configuration {0} is not in the basis")]
    NotInBasis(String),

    #[error("propagation failed: {0}")]
    Propagation(String),

    #[error("imbalance undefined for an initial state without both up and down spins")]
    UndefinedImbalance,

    #[error("effective model invalid for this disorder realization: {0}")]
    DisorderValidity(String),

    #[error("overlapping atoms in disorder realization (sites {0} and {1})")]
    OverlappingAtoms(usize, usize),

    #[error("scaling collapse: {0}")]
    Collapse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
