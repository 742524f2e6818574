use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("schema: {0}")]
    Schema(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("column `{column}` has zero standard deviation on the training rows; remove it from the schema")]
    ConstantColumn { column: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-positive {what} at index {index}: {value}")]
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("design is rank deficient; aliased columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },
    #[error("IRLS did not converge after {iterations} iterations (deviance trace {trace:?})")]
    NotConverged { iterations: usize, trace: Vec<f64> },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },
    #[error("code node {node} is constant on the training rows; re-initialise or use a smaller dimension")]
    DeadCodeNode { node: usize },
    #[error("grid mismatch between curves")]
    GridMismatch,
    #[error("empty input: {0}")]
    Empty(&'static str),
}
