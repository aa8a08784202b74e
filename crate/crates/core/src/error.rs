use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no connected sample for n={n}, edge_prob={edge_prob} after {retries} attempts")]
    GenerationFailed { n: usize, edge_prob: f64, retries: usize },

    #[error("graph is not connected")]
    NotConnected,

    #[error("node index {index} out of range for graph with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("score of node {index} is {value}; shift the scores to be positive first (see shifted_scores)")]
    NonPositiveScore { index: usize, value: f64 },

    #[error("budget K={budget} exceeds node count {n}")]
    BudgetExceedsNodes { budget: f64, n: usize },

    #[error("pagerank did not converge in {iterations} iterations (last residual {residual:e})")]
    PageRankNotConverged { iterations: usize, residual: f64 },

    #[error("step size {epsilon} outside (0, {bound}) = (0, 1/max_degree)")]
    EpsilonOutOfRange { epsilon: f64, bound: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    EigenNotConverged { iterations: usize },

    #[error("non-finite node value at round {round}")]
    NumericalFailure { round: usize },

    #[error("calibration stopped after {rounds} rounds with column spread {spread:e}")]
    CalibrationFailed { rounds: usize, spread: f64 },

    #[error("alpha[{index}] = {value:e} is too small for pre-compensation")]
    DegenerateAlpha { index: usize, value: f64 },

    #[error("infeasible constraint set: {0}")]
    Infeasible(String),

    #[error("{context} at SPSA iteration {iteration}: {source}")]
    Optimization {
        iteration: usize,
        context: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    /// Short, stable name used by the command line for machine-readable failures.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::GenerationFailed { .. } => "generation-failure",
            Error::NotConnected => "not-connected",
            Error::NodeOutOfRange { .. } => "index-out-of-range",
            Error::Parse { .. } => "parse-error",
            Error::Io { .. } => "io-error",
            Error::NonPositiveScore { .. } => "nonpositive-score",
            Error::BudgetExceedsNodes { .. } => "budget-exceeds-nodes",
            Error::PageRankNotConverged { .. } => "pagerank-nonconvergence",
            Error::EpsilonOutOfRange { .. } => "epsilon-out-of-range",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::EigenNotConverged { .. } => "eigensolver-nonconvergence",
            Error::NumericalFailure { .. } => "numerical-failure",
            Error::CalibrationFailed { .. } => "calibration-failure",
            Error::DegenerateAlpha { .. } => "degenerate-alpha",
            Error::Infeasible(_) => "infeasible",
            Error::Optimization { source, .. } => source.class(),
            Error::Empty(_) => "empty-input",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
