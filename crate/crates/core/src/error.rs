use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record could not be parsed. `line` is 1-based and counts the header.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// The data or configuration violates a structural requirement.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("too few rows: have {rows}, need at least {required}")]
    TooFewRows { rows: usize, required: usize },

    #[error("predictor {column} has {levels} distinct levels (limit {limit})")]
    TooManyLevels {
        column: String,
        levels: usize,
        limit: usize,
    },

    #[error("no fitted cell for predictor values {cell}")]
    UnseenCell { cell: String },

    #[error("column {0} is not available for this row")]
    MissingColumn(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A failure inside one regression stratum of a transport fit.
    #[error("{stratum}: {source}")]
    Stratum {
        stratum: String,
        #[source]
        source: Box<Error>,
    },

    #[error("bootstrap unstable: {failed} of {total} replicates failed")]
    UnstableBootstrap { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_stratum(stratum: impl Into<String>, source: Error) -> Self {
        Error::Stratum {
            stratum: stratum.into(),
            source: Box::new(source),
        }
    }

    /// Unwraps stratum annotations down to the originating error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stratum { source, .. } => source.root(),
            other => other,
        }
    }
}
