//! Command-line experiment runner: configuration, orchestration and
//! machine-readable output.

pub mod config;
pub mod experiment;

pub use config::{parse_config_text, resolve, to_config_text, DatasetSource, Entry, ExperimentSpec};
pub use experiment::{load_dataset, run_experiment, run_spec, ExperimentOutput, MetricsRecord};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error(transparent)]
    Core(#[from] pfedbred::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serialize(String),
}

impl CliError {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 divergence, 4 i/o, 5 data
    /// format, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use pfedbred::Error as E;
        match self {
            CliError::Config { .. } | CliError::Core(E::Config { .. } | E::UnknownName { .. }) => 2,
            CliError::Core(E::Divergence { .. } | E::Numerical { .. }) => 3,
            CliError::Io { .. } | CliError::Core(E::Io(_)) => 4,
            CliError::Core(E::Format { .. } | E::Partition(_)) => 5,
            _ => 1,
        }
    }
}
