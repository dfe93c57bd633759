use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The mesh generator could not honor the quality contract.
    #[error("mesh quality failure: {0}")]
    MeshQuality(String),

    /// A factorization or eigensolve failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An operation requiring mirror symmetry was applied to an
    /// asymmetric mesh or geometry.
    #[error("operation requires a mirror-symmetric mesh/geometry")]
    SymmetryRequired,

    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A spectral-parameter argument lies outside the admissible range
    /// (typically `lambda <= lambda_dagger`).
    #[error("spectral parameter {lambda} outside domain (threshold {threshold})")]
    SpectralDomain { lambda: f64, threshold: f64 },

    /// The near-eigenvalue lemma hypothesis `delta < M` failed; no
    /// conclusion can be drawn.
    #[error("near-eigenvalue hypothesis violated: delta = {delta} >= M = {m}")]
    NearEigenvalueHypothesis { delta: f64, m: f64 },

    /// Internal consistency check failed (signals a bug, not bad input).
    #[error("internal consistency failure: {0}")]
    Internal(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
