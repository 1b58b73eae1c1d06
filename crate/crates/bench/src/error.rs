use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] smoothrl_core::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

impl BenchError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BenchError::Usage(_) => "usage",
            BenchError::Config(_) | BenchError::Toml(_) => "config",
            BenchError::Core(smoothrl_core::Error::Input(_)) => "input",
            BenchError::Core(smoothrl_core::Error::Config(_)) => "config",
            BenchError::Core(smoothrl_core::Error::Checkpoint(_)) => "checkpoint",
            BenchError::Core(smoothrl_core::Error::NonFiniteLoss { .. }) => "non_finite_loss",
            BenchError::Core(_) => "runtime",
            BenchError::Io { .. } => "io",
            BenchError::Json(_) => "json",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" | "config" | "input" => 2,
            _ => 1,
        }
    }

    /// One-line machine-readable form for stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}
