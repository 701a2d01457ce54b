use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index {index} out of range (length {len})")]
    OutOfRange { index: usize, len: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("regression basis {basis} is rank deficient")]
    RankDeficient { basis: String },
    #[error("basis {basis} needs at least {needed} scenarios, got {got}")]
    InsufficientScenarios { basis: String, needed: usize, got: usize },
    #[error("flow diverged at step {step}")]
    FlowDivergence { step: usize },
    #[error("no bracket for the flow inverse at y = {y}")]
    BracketNotFound { y: f64 },
    #[error("flow lost monotonicity: D_y eta = {value}")]
    NonMonotoneFlow { value: f64 },
    #[error("point is not on the boundary")]
    NotOnBoundary,
    #[error("Picard iteration is not contracting, trace {trace:?}")]
    NonContraction { trace: Vec<f64> },
    #[error("Newton iteration failed at node {node}, time step {step}")]
    NewtonFailure { node: usize, step: usize },
    #[error("oracle refinement stalled, last difference {diff:e}")]
    RefinementStalled { diff: f64 },
    #[error("{excluded} of {total} scenarios excluded (non-finite proposals)")]
    TooManyExclusions { excluded: usize, total: usize },
    #[error("flow table lookup out of range: {0}")]
    OutOfTable(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
