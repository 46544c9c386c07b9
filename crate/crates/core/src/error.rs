use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid schedule at index {index}: {msg}")]
    InvalidSchedule { index: usize, msg: String },

    #[error("invalid schedule: entries sum to {sum}")]
    ScheduleSum { sum: f64 },

    #[error("node id {id} out of range for {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("duplicate set in process: {0}")]
    DuplicateSet(String),

    #[error("empty sample")]
    EmptySample,

    #[error("degenerate process: no node carries positive weight")]
    DegenerateProcess,

    #[error("numerical failure at iteration {iteration}: {msg}")]
    Numerical { iteration: usize, msg: String },

    #[error("time regression: step {got} after step {last}")]
    TimeRegression { last: u64, got: u64 },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
