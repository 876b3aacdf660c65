use thiserror::Error;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("{key}: {message}")]
    BadValue { key: String, message: String },

    #[error(transparent)]
    Core(#[from] jetext::Error),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("json encoding: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for usage and configuration problems, 2 for numerical breakdowns.
    pub fn exit_code(&self) -> i32 {
        use jetext::Error as E;
        match self {
            CliError::Core(E::Lp(_) | E::Infeasible(_) | E::NonFinite(_) | E::UnderdeterminedFit(_) | E::Oracle(_)) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
