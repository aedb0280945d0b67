use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("dilation by t = {t} leaves the grid (mass drift {drift:.3e})")]
    DilationRange { t: f64, drift: f64 },
    #[error("profile solve failed: {0}")]
    ProfileSolve(String),
    #[error("unsupported input: {0}")]
    Domain(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("fiber structure: {0}")]
    Structure(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("linear solve: zero pivot at row {0}")]
    Singular(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
