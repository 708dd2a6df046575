use thiserror::Error;

/// Errors raised by field operations, simulation, solvers and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("region {k} at ({row}, {col}) of size {size} lies outside a {width}x{height} grid")]
    Index {
        k: usize,
        row: usize,
        col: usize,
        size: usize,
        width: usize,
        height: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical guard: {0}")]
    NumericalGuard(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
