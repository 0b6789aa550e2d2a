use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum QsdError {
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("unsupported spec: {0}")]
    UnsupportedSpec(String),

    #[error("boundary classification inconclusive: partial I={i_partial:e}, partial J={j_partial:e}")]
    ClassificationInconclusive { i_partial: f64, j_partial: f64 },

    #[error("grid build failed on cell {cell}: {reason}")]
    GridBuild { cell: usize, reason: String },

    #[error("eigenfunction series did not converge within {budget} terms")]
    SeriesBudget { budget: usize },

    #[error("bisection bracket failure: {0}")]
    BracketFailure(String),

    #[error("invalid moment: {0}")]
    InvalidMoment(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("unsupported simulation: {0}")]
    UnsupportedSimulation(String),

    #[error("undefined tail ratio: no survivors at t={0}")]
    UndefinedRatio(f64),

    #[error("insufficient tail: only {0} usable points")]
    InsufficientTail(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QsdError>;
