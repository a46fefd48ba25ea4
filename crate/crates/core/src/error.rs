//! Crate-wide error type. Every failure carries enough context to act on:
//! offending entries, eigenvalues, gradient norms, or the config clause that
//! was violated.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precision matrix is not symmetric: entry ({i},{j}) = {a} but ({j},{i}) = {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },

    #[error("precision matrix is not positive definite: smallest eigenvalue {eigenvalue}")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("piece {index} has invalid curvature bounds: mu = {mu}, lipschitz = {lipschitz} (need 0 < mu <= lipschitz)")]
    InvalidPiece { index: usize, mu: f64, lipschitz: f64 },

    #[error("invalid curvature bounds: mu = {mu}, lipschitz = {lipschitz} (need 0 < mu <= lipschitz)")]
    InvalidCurvature { mu: f64, lipschitz: f64 },

    #[error("mode search failed to reach tolerance {tol}: gradient norm {grad_norm} after {iters} iterations at {best:?}")]
    ModeSearchFailed { tol: f64, grad_norm: f64, iters: usize, best: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate index {index} out of range for dimension {dim}")]
    CoordinateOutOfRange { index: usize, dim: usize },

    #[error("rejection sampler exceeded {cap} proposals (acceptance should be at least 1/sqrt(kappa) = {expected_rate}); declared mu/L likely wrong for this target")]
    ProposalCapExceeded { cap: u64, expected_rate: f64 },

    #[error("intervals overlap: ({a0}, {a1}) and ({b0}, {b1})")]
    OverlappingIntervals { a0: f64, a1: f64, b0: f64, b1: f64 },

    #[error("{what}")]
    Domain { what: String },

    #[error("enumeration too large: {cells} cells gives 3^{cells} = {labelings:.3e} labelings (cap {cap:.3e})")]
    EnumerationTooLarge { cells: usize, labelings: f64, cap: f64 },

    #[error("ball radius {radius} outside the admissible interval ({lo}, {hi}]")]
    RadiusOutsideInterval { radius: f64, lo: f64, hi: f64 },

    #[error("covariance is singular ({detail}); complete at least one full sweep before computing the law's divergence")]
    SingularCovariance { detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl Error {
    pub fn domain(what: impl Into<String>) -> Self {
        Error::Domain { what: what.into() }
    }

    pub fn config(what: impl Into<String>) -> Self {
        Error::Config(what.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
