use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    /// Cholesky pivot fell below tolerance; the selection is rank deficient.
    #[error("matrix is not positive definite (pivot {pivot:e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    /// The SMW capacitance matrix `I + V^H A^-1 U` could not be inverted.
    #[error("swap update is singular (pivot {pivot:e} at column {column})")]
    SingularUpdate { column: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("failed to parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("exhaustive search space of {candidates} masks exceeds the cap of {cap}")]
    SearchSpaceTooLarge { candidates: f64, cap: u64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error("no user could be served with positive power")]
    NoFeasibleUser,
}
