use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("angle {0} rad is not a Clifford point")]
    NonClifford(f64),
    #[error("{qubits} qubits exceeds the dense limit of {limit}")]
    TooLarge { qubits: usize, limit: usize },
    #[error("gate spans overlap within one layer: {0:?} and {1:?}")]
    OverlappingSpans((usize, usize), (usize, usize)),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

impl From<ndarray::ShapeError> for Error {
    fn from(e: ndarray::ShapeError) -> Self {
        Error::DimensionMismatch(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
