use thiserror::Error;

/// Failures raised anywhere in the synthesis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("pencil must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("pencil is singular: det(lambda E - A) vanishes at every probe (min relative sigma {min_relative_sigma:.3e})")]
    SingularPencil { min_relative_sigma: f64 },

    #[error("pencil has index >= 1 (nilpotent block of size >= 2): relative sigma_min of W^T A N_E is {relative_sigma:.3e}")]
    HigherIndex { relative_sigma: f64 },

    #[error("projector construction failed: {0}")]
    ProjectionFailure(String),

    #[error("structural assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("weights incompatible with the state splitting: {0}")]
    IncompatibleWeights(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("A0 is numerically singular")]
    SingularA0,

    #[error("integration failed: {0}")]
    IntegrationFailure(String),

    #[error("Newton iteration failed to converge at t = {t}")]
    NewtonFailure { t: f64 },

    #[error("time {t} lies outside the grid interior ({t0}, {tf})")]
    OutOfGrid { t: f64, t0: f64, tf: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("input is inconsistent with the initial state: residual {residual:.3e} exceeds {tolerance:.3e}")]
    InconsistentInput { residual: f64, tolerance: f64 },

    #[error("no admissible control exists: (x_i)_0 is not in range(Bt0), residual {residual:.3e}")]
    InconsistentInitialData { residual: f64 },

    #[error("variation is not admissible: |Bt0 h(0)| = {residual:.3e}")]
    InadmissibleVariation { residual: f64 },

    #[error("closed-loop coupling matrix is singular (condition estimate {condition:.3e})")]
    SingularClosedLoopCoupling { condition: f64 },

    #[error("fixed-point iteration did not converge in {iterations} iterations (last step {last_step:.3e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("problem too large for the dense oracle: {unknowns} unknowns (limit {limit})")]
    TooLarge { unknowns: usize, limit: usize },

    #[error("KKT system is singular")]
    SingularKkt,

    #[error("discrete elliptic operator K + gamma M is singular")]
    SingularElliptic,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// True for errors caused by a violated modelling assumption rather than
    /// a numerical breakdown.
    pub fn is_assumption(&self) -> bool {
        matches!(
            self,
            Error::NonSquare { .. }
                | Error::SingularPencil { .. }
                | Error::HigherIndex { .. }
                | Error::AssumptionViolated(_)
                | Error::IncompatibleWeights(_)
                | Error::InvalidWeights(_)
                | Error::SingularA0
                | Error::InconsistentInput { .. }
                | Error::InconsistentInitialData { .. }
                | Error::SingularElliptic
        )
    }

    /// Short stable name used in diagnostics output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonSquare { .. } => "NonSquare",
            Error::SingularPencil { .. } => "SingularPencil",
            Error::HigherIndex { .. } => "HigherIndex",
            Error::ProjectionFailure(_) => "ProjectionFailure",
            Error::AssumptionViolated(_) => "AssumptionViolated",
            Error::IncompatibleWeights(_) => "IncompatibleWeights",
            Error::InvalidWeights(_) => "InvalidWeights",
            Error::SingularA0 => "SingularA0",
            Error::IntegrationFailure(_) => "IntegrationFailure",
            Error::NewtonFailure { .. } => "NewtonFailure",
            Error::OutOfGrid { .. } => "OutOfGrid",
            Error::GridMismatch(_) => "GridMismatch",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InconsistentInput { .. } => "InconsistentInput",
            Error::InconsistentInitialData { .. } => "InconsistentInitialData",
            Error::InadmissibleVariation { .. } => "InadmissibleVariation",
            Error::SingularClosedLoopCoupling { .. } => "SingularClosedLoopCoupling",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::TooLarge { .. } => "TooLarge",
            Error::SingularKkt => "SingularKKT",
            Error::SingularElliptic => "SingularElliptic",
            Error::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
