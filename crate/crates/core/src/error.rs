use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("sdf grid of {requested} voxels exceeds the limit of {limit}")]
    GridTooLarge { requested: usize, limit: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("scene mesh has no vertex labels; run in geometric-only mode (semantic weight 0)")]
    MissingLabels,

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("invalid motion: {0}")]
    InvalidMotion(String),

    #[error("invalid features: {0}")]
    InvalidFeatures(String),

    #[error("length mismatch: {what} (expected {expected}, got {actual})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("candidate grid is empty: {0}")]
    EmptyGrid(String),

    #[error("no valid fit location for this motion in the scene")]
    NoValidFit,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
