use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}: line {line}, column `{column}`: {message}")]
    Parse {
        source_name: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{0}")]
    Format(String),
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] lder_core::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::Usage(_) => "usage",
            Error::Core(_) => "numeric",
            Error::Json(_) => "json",
        }
    }

    /// `{"error": {"kind": …, "message": …}}` plus the location of parse errors.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = serde_json::json!({
            "kind": self.kind(),
            "message": self.to_string(),
        });
        if let Error::Parse { line, column, .. } = self {
            body["line"] = (*line).into();
            body["column"] = column.clone().into();
        }
        serde_json::json!({ "error": body })
    }
}
