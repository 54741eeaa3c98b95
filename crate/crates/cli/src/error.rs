use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error{}: {message}", key.as_ref().map(|k| format!(" at `{k}`")).unwrap_or_default())]
    Config { key: Option<String>, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: pvi_core::Error,
    },

    #[error("report `{path}` has kind `{found}`, expected {expected}")]
    KindMismatch {
        path: String,
        found: String,
        expected: String,
    },
}

impl CliError {
    pub fn solver(context: impl Into<String>, source: pvi_core::Error) -> Self {
        CliError::Solver {
            context: context.into(),
            source,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Solver { .. } => "solver",
            CliError::KindMismatch { .. } => "kind_mismatch",
        }
    }

    /// Machine-readable form written to standard error.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        match self {
            CliError::Config { key: Some(k), .. } => v["key"] = json!(k),
            CliError::Solver { source, .. } => v["solver_error"] = json!(source.kind()),
            _ => {}
        }
        v
    }
}
