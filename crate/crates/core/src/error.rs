//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Error`]. Variants carry
//! enough context (indices, sizes, offending values) that a caller can report
//! the failure without re-running the computation.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must be symmetric is not, beyond round-off tolerance.
    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {delta:.3e} exceeds tolerance {tol:.3e}")]
    NotSymmetric {
        row: usize,
        col: usize,
        delta: f64,
        tol: f64,
    },

    /// A covariance matrix has an eigenvalue too negative to be round-off.
    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue:.6e} is below the floor {floor:.6e}")]
    NotPsd { eigenvalue: f64, floor: f64 },

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: {context} ({left} vs {right})")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// A component covariance lost positive definiteness during fitting.
    #[error("component {component} has a degenerate covariance (Cholesky factorization failed)")]
    DegenerateComponent { component: usize },

    /// A component received (numerically) zero total responsibility.
    #[error("component {component} has zero total responsibility ({total:.3e})")]
    EmptyComponent { component: usize, total: f64 },

    /// Fewer observations than mixture components.
    #[error("too few observations: {observations} rows cannot support {components} components")]
    TooFewObservations {
        observations: usize,
        components: usize,
    },

    /// Input data contains NaN or infinity.
    #[error("non-finite value {value} at row {row}, column {col}")]
    NonFiniteData { row: usize, col: usize, value: f64 },

    /// A serialized model failed to parse or violated a model invariant.
    #[error("malformed model: {detail}")]
    MalformedModel { detail: String },

    /// Mixture weights or components violate a mixture invariant.
    #[error("invalid mixture: {detail}")]
    InvalidMixture { detail: String },

    /// Transport marginals do not form a balanced pair of distributions.
    #[error("infeasible marginals: {detail}")]
    InfeasibleMarginals { detail: String },

    /// The transport solver exceeded its pivot budget without converging.
    #[error("transport solver stalled after {pivots} pivots (budget {budget})")]
    NumericalStall { pivots: usize, budget: usize },

    /// Two empirical samples that must be equally sized are not.
    #[error("unequal sample counts: {left} vs {right}")]
    UnequalSampleCounts { left: usize, right: usize },

    /// An empirical distribution has no samples.
    #[error("empty sample set: {context}")]
    EmptySamples { context: String },

    /// A one-dimensional operation was given multi-dimensional input.
    #[error("expected one-dimensional input, got dimension {dim}")]
    DimensionNotOne { dim: usize },

    /// Inputs violate a required ordering precondition.
    #[error("ordering violated: {detail}")]
    OrderingViolated { detail: String },

    /// A label has too few training rows for the requested model size.
    #[error("label {label:?} has {rows} rows, fewer than the {needed} required")]
    LabelTooSmall {
        label: String,
        rows: usize,
        needed: usize,
    },

    /// The nearest-neighbor baseline was given no training rows.
    #[error("empty training set")]
    EmptyTrainingSet,

    /// A fit or evaluation configuration value is out of range.
    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },

    /// A function argument violates a documented precondition.
    #[error("invalid argument: {detail}")]
    InvalidArgument { detail: String },

    /// A delimited input file could not be read as a numeric table.
    #[error("{file}:{line}: {message}")]
    Dataset {
        file: String,
        line: u64,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
