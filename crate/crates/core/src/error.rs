use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Reported with 1-based indices, as written in the input.
    #[error("position ({row}, {col}) is outside the {m}x{n} matrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        m: usize,
        n: usize,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical rank verdict stayed ill-conditioned after {attempts} factor samples")]
    IllConditioned { attempts: usize },

    #[error("entry ({row}, {col}) is not completable from the observed positions")]
    NotCompletable { row: usize, col: usize },

    #[error("observed entry ({row}, {col}) is zero; its logarithm is undefined")]
    ZeroEntry { row: usize, col: usize },

    #[error("witness minor is degenerate: the target cofactor vanishes")]
    DegenerateMinor,

    #[error("infeasible degree sequence: {0}")]
    InfeasibleDegrees(String),

    #[error("gave up after {0} restarts")]
    TooManyRestarts(usize),

    #[error("search budget exhausted")]
    BudgetExhausted,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
