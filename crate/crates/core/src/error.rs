use thiserror::Error;

/// Which denominator of the driving-polynomial root formulas vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootDenominator {
    /// `a3 - a4`, the denominator of the smaller root of `p1`.
    A3MinusA4,
    /// `a3 + a4`, the denominator of the larger root of `p1`.
    A3PlusA4,
    /// `a5 - a6`, the denominator of the smaller root of `p2`.
    A5MinusA6,
    /// `a5 + a6`, the denominator of the larger root of `p2`.
    A5PlusA6,
    /// `S1 - n * h_next`, vanishing for a centered augmentation point.
    CenteredPoint,
    /// A prefix-level denominator such as `S1,m - m * h_{m+1}`.
    Prefix { m: usize },
}

impl std::fmt::Display for RootDenominator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RootDenominator::A3MinusA4 => write!(f, "a3 - a4"),
            RootDenominator::A3PlusA4 => write!(f, "a3 + a4"),
            RootDenominator::A5MinusA6 => write!(f, "a5 - a6"),
            RootDenominator::A5PlusA6 => write!(f, "a5 + a6"),
            RootDenominator::CenteredPoint => write!(f, "S1 - n*h_next"),
            RootDenominator::Prefix { m } => write!(f, "prefix denominator at m = {m}"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("matrix is singular (pivot {pivot:e} below threshold {threshold:e})")]
    Singular { pivot: f64, threshold: f64 },

    #[error("rank-one update is degenerate (1 + d'C^-1 b = {denominator:e})")]
    DegenerateUpdate { denominator: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("variance at index {index} must be strictly positive, got {value}")]
    NotPositive { index: usize, value: f64 },

    #[error("covariance matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("covariance matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("noise is correlated; use the correlated decomposition")]
    NotDiagonal,

    #[error("base variances are not all equal")]
    NotEqualVariance,

    #[error("design points have (numerically) zero variance: V = {variance:e}")]
    DegenerateDesign { variance: f64 },

    #[error("degenerate root formula: denominator {0} vanished")]
    DegenerateRoot(RootDenominator),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
