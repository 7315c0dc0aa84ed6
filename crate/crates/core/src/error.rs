use thiserror::Error;

/// Errors raised anywhere in the kernel pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("root solver failed to invert the circle CDF at t = {0}")]
    InversionFailure(f64),
    #[error("covariance matrix is not symmetric positive definite: {0}")]
    InvalidCovariance(String),
    #[error("operation requires a different manifold: {0}")]
    WrongManifold(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("requested k = {k} neighbors but the cloud has only {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("pilot bandwidth vanishes at point {0} (duplicated points)")]
    DuplicatePoints(usize),
    #[error("kernel support graph is disconnected; component sizes {component_sizes:?}")]
    DisconnectedGraph { component_sizes: Vec<usize> },
    #[error("eigensolver did not converge after {iterations} matrix-vector products")]
    SolverFailure { iterations: usize },
    #[error("eigenvector column {0} is identically zero")]
    DegenerateEigenvector(usize),
    #[error("cross product is rank deficient; orthogonal alignment is not unique")]
    AlignmentAmbiguous,
    #[error("mask selects no entries")]
    EmptyMask,
    #[error("tuning curve has no region of positive slope")]
    NoLinearRegion,
    #[error("point cloud carries no latent coordinates")]
    NoLatent,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
