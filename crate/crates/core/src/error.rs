use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("duplicate atom location ({x}, {y}, {z})")]
    DuplicateLocation { x: f64, y: f64, z: f64 },

    #[error("atom {index} at ({x}, {y}, {z}) lies outside the source region")]
    OutsideRegion { index: usize, x: f64, y: f64, z: f64 },

    #[error("atom {index} at ({x}, {y}, {z}) is not a node of the dipole space")]
    OffNode { index: usize, x: f64, y: f64, z: f64 },

    #[error("kernel singularity: |x| = {0:e}")]
    Singularity(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("oracle refuses problems with {unknowns} unknowns (limit {limit})")]
    OracleTooLarge { unknowns: usize, limit: usize },

    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
