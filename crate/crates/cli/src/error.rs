use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// `row` is the 1-based data row (the header is row 0).
    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("data error: {0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] seqgp::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Rewrites a core error raised while processing 0-based record `index`.
    pub fn at_row(e: seqgp::Error, index: usize) -> Self {
        match e {
            seqgp::Error::Data { message, .. } => CliError::Data {
                row: index + 1,
                message,
            },
            other => CliError::Core(other),
        }
    }

    /// 2 for configuration problems, 3 for bad data, 4 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        use seqgp::Error as E;
        match self {
            CliError::Config { .. } => 2,
            CliError::Data { .. } | CliError::Input(_) | CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                E::Config(_) | E::Unsupported(_) | E::Model(_) | E::Usage(_) => 2,
                E::Shape { .. } | E::Data { .. } => 3,
                E::Numerical(_) => 4,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
