use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point outside the domain of `{map}` ({domain}) at coordinate {index}: {value}")]
    Domain {
        map: &'static str,
        domain: &'static str,
        index: usize,
        value: f64,
    },

    #[error("non-finite value at step {step}: {what}")]
    Numerical { step: usize, what: String },

    #[error("divergence in round {round}, {}, local step {step}: {what}", client.map_or("server".to_string(), |c| format!("client {c}")))]
    Divergence {
        round: usize,
        client: Option<usize>,
        step: usize,
        what: String,
    },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("format error at byte offset {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownName {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
