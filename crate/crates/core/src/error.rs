use thiserror::Error;

use crate::inference::Edge;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("Jacobi eigenvalue iteration did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("design is rank deficient: column {column} is collinear with earlier columns")]
    RankDeficient { column: usize },

    #[error("probability {0} is outside the open interval (0, 1)")]
    OutOfRange(f64),

    #[error("invalid probability {0}: must lie in [0, 1]")]
    InvalidProb(f64),

    #[error("{groups} groups do not evenly partition {p} variables")]
    InvalidPartition { p: usize, groups: usize },

    #[error("precision matrix could not be inverted: {0}")]
    SingularPrecision(String),

    #[error("gamma/(2pd) = {0} must be below 1/2")]
    InvalidGamma(f64),

    #[error("penalty loading {index} collapsed to {value:e}")]
    DegenerateLoading { index: usize, value: f64 },

    #[error("empirical Jacobian {value:e} is numerically zero")]
    DegenerateJacobian { value: f64 },

    #[error("score variance estimate is zero")]
    DegenerateVariance,

    #[error("critical values were computed for {built}, region requires {wanted}")]
    SpecMismatch { built: String, wanted: String },

    #[error("p = {p} is incompatible with design {design}: {reason}")]
    IncompatibleP {
        design: String,
        p: usize,
        reason: String,
    },

    #[error("candidate edge {0} is a true edge of the generating model")]
    NullViolated(Edge),

    #[error("training sample of {fold_size} rows (n = {n}, K = {folds}) has fewer rows than variables; post-lasso refits may be empty")]
    FoldTooSmall {
        n: usize,
        folds: usize,
        fold_size: usize,
    },

    #[error("invalid edge: {0}")]
    InvalidEdge(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("edge {edge}: {source}")]
    Edge {
        edge: Edge,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_edge(self, edge: Edge) -> Self {
        match self {
            e @ Error::Edge { .. } => e,
            other => Error::Edge {
                edge,
                source: Box::new(other),
            },
        }
    }

    /// True for failures that come from the numbers rather than from the
    /// shape or validity of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::NonConvergence { .. }
            | Error::RankDeficient { .. }
            | Error::SingularPrecision(_)
            | Error::DegenerateLoading { .. }
            | Error::DegenerateJacobian { .. }
            | Error::DegenerateVariance => true,
            Error::Edge { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
