use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("qubit index {qubit} out of range for {n_qubits} qubits")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("{requested} qubits requested, limit is {limit}")]
    TooManyQubits { requested: usize, limit: usize },

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("cannot place {requested} edges on {n_nodes} nodes, max is {max}")]
    InfeasibleEdgeCount {
        n_nodes: usize,
        requested: usize,
        max: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("integration diverged (non-finite state)")]
    IntegrationDiverged,

    #[error("objective evaluation failed: {0}")]
    EvaluationFailed(String),

    #[error("degenerate extrema: c_max == c_min == {0}")]
    DegenerateExtrema(f64),

    #[error("empty range")]
    EmptyRange,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
