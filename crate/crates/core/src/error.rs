use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh input: {0}")]
    InvalidInput(String),
    #[error("triangle {triangle} is inverted or degenerate (signed area {area:e})")]
    InvertedElement { triangle: usize, area: f64 },
    #[error("boundary polylines intersect between edges {first} and {second}")]
    SelfIntersection { first: usize, second: usize },
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("right-hand side violates the Neumann compatibility condition (<rhs, 1> = {sum:e})")]
    Incompatible { sum: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("step failed after {halvings} stepsize halvings (last stepsize {stepsize:e}): {reason}")]
    StepFailure {
        halvings: usize,
        stepsize: f64,
        reason: String,
    },
}
