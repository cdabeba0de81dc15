use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("matrix is singular or not positive definite (smallest eigenvalue {delta_min:e}, required > {threshold:e})")]
    Singular { delta_min: f64, threshold: f64 },

    #[error("empty null space: stacked matrix has rank {rank} with {cols} columns (singular-value cutoff 1e-10 relative)")]
    EmptyNullSpace { rank: usize, cols: usize },

    #[error("utility domain error: {0}")]
    UtilityDomain(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("ellipsoid shape matrix lost positive definiteness after reconditioning (iteration {iteration})")]
    EllipsoidBreakdown { iteration: usize },

    #[error("degenerate top eigenspace: {0}")]
    DegenerateEigenspace(String),
}
