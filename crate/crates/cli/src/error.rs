use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config at `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("experiment `{name}`: {source}")]
    Module {
        name: String,
        #[source]
        source: nonneg_core::Error,
    },

    #[error("unknown experiment `{name}`{}", suggestion.as_ref().map(|s| format!("; did you mean `{s}`?")).unwrap_or_default())]
    UnknownExperiment { name: String, suggestion: Option<String> },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn missing(field: &str, kind: &str) -> CliError {
    CliError::ConfigInvalid {
        field: field.to_string(),
        message: format!("required for kind `{kind}`"),
    }
}

/// Attaches the experiment name to a core error; config errors keep their
/// field path.
pub(crate) fn in_experiment(name: &str) -> impl Fn(nonneg_core::Error) -> CliError + '_ {
    move |e| match e {
        nonneg_core::Error::ConfigInvalid { field, message } => CliError::ConfigInvalid { field, message },
        source => CliError::Module {
            name: name.to_string(),
            source,
        },
    }
}
