use thiserror::Error;

pub type Result<T> = std::result::Result<T, BasError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasError {
    #[error("dimension mismatch in {space}: expected {expected}, got {actual}")]
    DimensionMismatch {
        space: String,
        expected: usize,
        actual: usize,
    },

    #[error("duplicate channel name `{0}`")]
    DuplicateChannel(String),

    #[error("unknown channel `{channel}` on `{component}`")]
    DanglingChannel { component: String, channel: String },

    #[error("unknown component `{0}`")]
    UnknownComponent(String),

    #[error("input `{component}.{channel}` has more than one producer")]
    MultipleProducers { component: String, channel: String },

    #[error("algebraic cycle: {}", .0.join(" -> "))]
    AlgebraicCycle(Vec<String>),

    #[error("non-affine coupling: {0}")]
    NonAffine(String),

    #[error("unknown mode `{mode}` (declared: {})", .declared.join(", "))]
    UnknownMode { mode: String, declared: Vec<String> },

    #[error("missing parameter `{0}`")]
    MissingParameter(String),

    #[error("parameter `{name}` must be {requirement}, got {value}")]
    InvalidParameter {
        name: String,
        requirement: &'static str,
        value: f64,
    },

    #[error("bilinear term on input `{0}` must be frozen first")]
    UnfrozenBilinear(String),

    #[error("unknown benchmark `{id}` (valid: {})", .valid.join(", "))]
    UnknownBenchmark { id: String, valid: Vec<String> },

    #[error("no similarity-relation entry for abstract order {order} at delta {delta}")]
    MissingTableEntry { order: usize, delta: f64 },

    #[error("model is stochastic; use the stochastic verification engine")]
    StochasticModel,

    #[error("support function unbounded in the requested direction")]
    Unbounded,

    #[error("infeasible set: {0}")]
    Infeasible(String),

    #[error("degenerate cell along axis {0}")]
    DegenerateCell(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("nondeterministic guards: {0}")]
    NondeterministicGuards(String),

    #[error("trace format: line {line}: {message}")]
    TraceFormat { line: usize, message: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for BasError {
    fn from(err: std::io::Error) -> Self {
        BasError::Io(err.to_string())
    }
}

impl From<csv::Error> for BasError {
    fn from(err: csv::Error) -> Self {
        BasError::Io(err.to_string())
    }
}

impl From<serde_json::Error> for BasError {
    fn from(err: serde_json::Error) -> Self {
        BasError::Io(err.to_string())
    }
}

pub(crate) fn check_dim(space: &str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(BasError::DimensionMismatch {
            space: space.to_string(),
            expected,
            actual,
        })
    }
}
