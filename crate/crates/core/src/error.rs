//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The design matrix is numerically rank deficient.
    #[error("design matrix is rank deficient (singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("insufficient rows: {rows} observations for {parameters} parameters")]
    InsufficientRows { rows: usize, parameters: usize },

    /// Logistic fit diverged because the classes are (quasi-)separable.
    #[error("quasi-complete separation detected (|coefficient| = {magnitude:.3} exceeds 15)")]
    Separation { magnitude: f64 },

    #[error("no variation in outcome: {0}")]
    NoVariation(String),

    /// Residual exposure variance is numerically zero, so the bias is unbounded.
    #[error("degenerate exposure model: R^2 = {r_squared} leaves no residual exposure variance")]
    DegenerateExposure { r_squared: f64 },

    #[error("iteratively reweighted least squares did not converge in {iterations} iterations")]
    NotConverged { iterations: usize },

    /// An iterative special-function routine hit its iteration cap.
    #[error("internal numerical error: {0}")]
    Internal(String),

    #[error("parse error at row {row}{}: {message}", column.as_ref().map(|c| format!(", column '{c}'")).unwrap_or_default())]
    Parse {
        row: usize,
        column: Option<String>,
        message: String,
    },

    #[error("no complete rows remain after dropping missing values")]
    EmptyAfterFiltering,

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
