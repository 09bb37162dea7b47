use thiserror::Error;

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Error)]
pub enum ModelError {
    /// An argument fell outside the domain of a law (e.g. a radius inside the photosphere).
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter set violates one of its invariants. `fields` names every offending field.
    #[error("invalid parameters ({}): {detail}", fields.join(", "))]
    InvalidParams { fields: Vec<String>, detail: String },

    #[error("integration failed on ray p={p}, x={x}: {detail}")]
    Integration { p: f64, x: f64, detail: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Caller broke an operation's preconditions (mismatched grids, too few windows, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ModelError {
    pub fn invalid(fields: &[&str], detail: impl Into<String>) -> Self {
        ModelError::InvalidParams { fields: fields.iter().map(|s| s.to_string()).collect(), detail: detail.into() }
    }
}
