use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Whether an error comes from bad input or from a numerical regime in which
/// the algorithms (or their analysis) are not defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid weight matrix: {0}")]
    WeightMatrix(String),

    #[error("invalid array geometry: {0}")]
    Geometry(String),

    #[error("invalid source scenario: {0}")]
    Scenario(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (relative defect {defect:.3e})")]
    NotSymmetric { defect: f64 },

    #[error("matrix is not Hermitian (relative defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("weight matrix does not drive consensus: {0}")]
    NonConvergentWeights(String),

    #[error("eigenvalues {i} and {j} are too close ({lambda_i:.6e} vs {lambda_j:.6e})")]
    EigenGap {
        i: usize,
        j: usize,
        lambda_i: f64,
        lambda_j: f64,
    },

    #[error("power iteration cannot separate eigenvector {index}: leading remaining eigenvalues coincide")]
    Degenerate { index: usize },

    #[error("rank deficient system in {context} (condition number {cond:.3e})")]
    RankDeficient { cond: f64, context: String },

    #[error("estimate is orthogonal to the reference vector")]
    Orthogonal,

    #[error("DOA {theta_deg} deg is outside the open interval (-90, 90)")]
    AngleOutOfRange { theta_deg: f64 },

    #[error("source at {theta_deg} deg is too close to endfire for the DOA error formula")]
    Endfire { theta_deg: f64 },

    #[error("eigen-solver failed: {0}")]
    Eigen(String),

    #[error("consensus produced a non-positive norm estimate at node {node}")]
    NormEstimate { node: usize },

    #[error("self-check failed: {0}")]
    SelfCheck(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Topology(_)
            | Error::WeightMatrix(_)
            | Error::Geometry(_)
            | Error::Scenario(_)
            | Error::Dimension(_)
            | Error::AngleOutOfRange { .. }
            | Error::Config { .. } => ErrorClass::Input,
            Error::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Numerical,
        }
    }
}
