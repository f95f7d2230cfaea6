use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// One message per violated parameter constraint.
    #[error("invalid model parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no convergence after {iterations} iterations (last increment {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("iterate left the range of f64 after {iterations} iterations")]
    NonFinite { iterations: usize },

    #[error("coupled-mode budget exceeded: {required} uniform draws > limit {limit}")]
    BudgetExceeded { required: u64, limit: u64 },

    #[error("population count exceeds 2^62 at generation {generation}")]
    Overflow { generation: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: malformed CSV at line {line}: {message}", path.display())]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParams(_)
            | Error::Domain(_)
            | Error::InvalidInput(_)
            | Error::EmptySample => 2,
            Error::NoConvergence { .. } | Error::NonFinite { .. } => 3,
            Error::BudgetExceeded { .. } | Error::Overflow { .. } => 4,
            Error::Io { .. } | Error::Json { .. } | Error::Csv { .. } => 5,
        }
    }
}
