use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("unsupported method/model combination: {0}")]
    Capability(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),
}

impl Error {
    /// Process exit code for the CLI: 2 usage/capability, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capability(_) => 2,
            Error::Io(_) | Error::Format(_) | Error::Data(_) => 3,
            Error::Numerical(_) | Error::Infeasible(_) => 4,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
