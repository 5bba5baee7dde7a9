use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("face {face} references vertex {index} but mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },

    #[error("face on line {line} has {arity} vertices; only triangles are supported")]
    NonTriangleFace { line: usize, arity: usize },

    #[error("empty mesh")]
    EmptyMesh,

    #[error("mesh has zero total area")]
    ZeroArea,

    #[error("mesh is not closed ({boundary_edges} boundary or non-manifold edges)")]
    OpenMesh { boundary_edges: usize },

    #[error("vertex {vertex} has no incident face area")]
    IsolatedVertex { vertex: usize },

    #[error("vertex {vertex} has zero mixed area")]
    ZeroMixedArea { vertex: usize },

    #[error("connectivity mismatch: {0}")]
    ConnectivityMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("insufficient visits: need at least {needed}, got {got}")]
    InsufficientVisits { needed: usize, got: usize },

    #[error("non-finite field output at step {step}, vertex {vertex}")]
    NonFiniteField { step: usize, vertex: usize },

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("empty group: {0}")]
    EmptyGroup(&'static str),

    #[error("no normative data: {0}")]
    MissingBracket(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
