use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid `{field}`: {constraint}")]
    Validation { field: String, constraint: String },
    #[error("no column `{0}` in the table")]
    MissingColumn(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] nessedp_core::Error),
}

impl CliError {
    pub fn validation(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self::Validation {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Self::Parse { .. } => "parse",
            Self::Validation { .. } => "validation",
            Self::MissingColumn(_) => "missing-column",
            Self::Io { .. } => "io",
            Self::Csv(_) => "csv",
            Self::Json(_) => "json",
            Self::Core(_) => "numerics",
        }
    }

    /// Failure report written to stderr on a nonzero exit.
    pub fn report(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "status": "error",
            "error": self.category(),
            "message": self.to_string(),
        });
        match self {
            Self::Parse { line, column, .. } => {
                v["line"] = (*line).into();
                v["column"] = (*column).into();
            }
            Self::Validation { field, constraint } => {
                v["field"] = field.clone().into();
                v["constraint"] = constraint.clone().into();
            }
            _ => {}
        }
        v
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
