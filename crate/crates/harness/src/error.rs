use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    /// A well-formed config whose values do not fit together.
    #[error("{key}: {msg}")]
    Semantic { key: String, msg: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Engine(#[from] rmbp_core::Error),

    /// Engine failures inside a batch, keyed by the run that failed.
    #[error("run {index}: {source}")]
    Run {
        index: usize,
        #[source]
        source: rmbp_core::Error,
    },

    #[error("cannot read {path}: {source}")]
    ReadInput {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub(crate) fn semantic(key: impl Into<String>, msg: impl Into<String>) -> Self {
        HarnessError::Semantic {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for engine and
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Syntax { .. } | HarnessError::Semantic { .. } | HarnessError::UnknownPreset(_) => 2,
            HarnessError::ReadInput { .. } => 2,
            HarnessError::Engine(rmbp_core::Error::InvalidSpec(_)) => 2,
            HarnessError::Engine(_) | HarnessError::Run { .. } | HarnessError::Io { .. } => 3,
        }
    }
}
