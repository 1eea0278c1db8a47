use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("coordinate {value} is not on the lattice of spacing 1/{n_per_unit}")]
    OffLattice { value: f64, n_per_unit: usize },

    #[error("boundary edge with midpoint ({x}, {y}) is missing a {decomposition} tag")]
    UntaggedEdge { x: f64, y: f64, decomposition: &'static str },

    #[error("region is not aligned with the mesh: {0}")]
    Misaligned(String),

    #[error("point ({x}, {y}) lies outside the reference triangle")]
    OutsideReference { x: f64, y: f64 },

    #[error("no quadrature rule of degree {0}")]
    UnsupportedDegree(usize),

    #[error("degenerate triangle (signed area {0})")]
    DegenerateTriangle(f64),

    #[error("conflicting Dirichlet values {a} and {b} at node {node}")]
    DirichletConflict { node: usize, a: f64, b: f64 },

    #[error("index ({row}, {col}) out of range for a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange { row: usize, col: usize, n_rows: usize, n_cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is singular at pivot row {row}")]
    Singular { row: usize },

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("missing input: {0}")]
    MissingInput(&'static str),

    #[error("invalid parameter {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite values after the {system} solve")]
    NonFinite { system: &'static str },

    #[error("time stamps differ: {a} vs {b}")]
    TimeMismatch { a: f64, b: f64 },

    #[error("line x1 = {0} does not coincide with the open boundary")]
    OffBoundary(f64),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
