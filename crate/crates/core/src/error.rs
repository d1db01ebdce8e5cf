//! Error types shared across the toolkit.

use thiserror::Error;

/// Grid coordinates of a point, reported in errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointIndex {
    pub ix: usize,
    pub iy: usize,
    pub iz: usize,
}

impl std::fmt::Display for PointIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.ix, self.iy, self.iz)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("metric near-singular at grid point {point}: |det g| = {det:.3e}")]
    SingularMetric { point: PointIndex, det: f64 },

    #[error("Lorentzian signature lost at grid point {point}: {detail}")]
    Signature { point: PointIndex, detail: String },

    #[error("matrix block not positive definite at grid point {point}: min eigenvalue {eig:.3e}")]
    NotPositiveDefinite { point: PointIndex, eig: f64 },

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("structure condition violated: {0}")]
    Structure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("snapshot format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
