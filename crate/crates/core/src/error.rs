use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("invalid bands: {0}")]
    InvalidBands(String),
    #[error("symbol is not elliptic on the {branch} branch: min |principal| = {min_abs:e}")]
    NotElliptic { branch: &'static str, min_abs: f64 },
    #[error("symbol principal part is not positive: min = {min:e}")]
    NotPositive { min: f64 },
    #[error("symbol is not real: max imaginary part = {max_imag:e}")]
    NotReal { max_imag: f64 },
    #[error("map does not gain a degree: input top {input}, output top {output}")]
    NoDegreeGain { input: f64, output: f64 },
    #[error("symbol shape mismatch: {0}")]
    SymbolShape(String),
    #[error("operator not Hermitian: asymmetry {asym:e} exceeds tolerance {tol:e}")]
    NotHermitian { asym: f64, tol: f64 },
    #[error("operator not positive definite: min eigenvalue {min_eig:e}")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("positivity of r + r* unreachable up to cutoff radius {radius}: min eigenvalue {min_eig:e}")]
    CutoffExhausted { radius: f64, min_eig: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("trajectory left the resolved region: {0}")]
    Trajectory(String),
    #[error("no convergence under step refinement: last change {change:e}, tolerance {tol:e}")]
    NoConvergence { change: f64, tol: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("linear algebra failure: {0}")]
    LinAlg(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
