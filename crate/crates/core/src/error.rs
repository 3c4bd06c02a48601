use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dynamical matrix has a zero mode (smallest eigenvalue {min_eigenvalue:e})")]
    ZeroMode { min_eigenvalue: f64 },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("site index {index} out of range for {n_sites} sites")]
    IndexOutOfRange { index: usize, n_sites: usize },
    #[error("region is empty")]
    EmptyRegion,
    #[error("region is not standard: {0}")]
    NotStandard(String),
    #[error("spectrum outside the function's domain: {eigenvalues:?}")]
    SpectrumOutOfDomain { eigenvalues: Vec<f64> },
    #[error("operator is not mu-self-adjoint (residual {residual:e})")]
    NotMuSelfAdjoint { residual: f64 },
    #[error("decomposition h = f + Ig is singular (relative singular value {min_singular:e})")]
    DecompositionSingular { min_singular: f64 },
    #[error("quadrature did not converge (achieved {achieved:e} after {evaluations} evaluations)")]
    QuadratureNotConverged { achieved: f64, evaluations: usize },
    #[error("positivity violated: min spec(X_R P_R) = {min_eigenvalue}")]
    PositivityViolation { min_eigenvalue: f64 },
    #[error("modular Hamiltonian diverges: {count} mode(s) with c - 1/2 within tolerance: {eigenvalues:?}")]
    ModularDivergence { eigenvalues: Vec<f64>, count: usize },
    #[error("eigenvalue {eigenvalue:e} of G^-1 G^T is within tolerance of the log branch cut")]
    BranchCutProximity { eigenvalue: f64 },
    #[error("matrix exponential overflow (norm {norm:e})")]
    Overflow { norm: f64 },
    #[error("generator constructions disagree (relative mismatch {mismatch:e})")]
    GeneratorMismatch { mismatch: f64 },
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("Fock truncation not converged (entropy change {change:e})")]
    TruncationNotConverged { change: f64 },
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::ZeroMode { .. } => "ZeroMode",
            Error::Numerical(_) => "NumericalError",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::EmptyRegion => "EmptyRegion",
            Error::NotStandard(_) => "NotStandard",
            Error::SpectrumOutOfDomain { .. } => "SpectrumOutOfDomain",
            Error::NotMuSelfAdjoint { .. } => "NotMuSelfAdjoint",
            Error::DecompositionSingular { .. } => "DecompositionSingular",
            Error::QuadratureNotConverged { .. } => "QuadratureNotConverged",
            Error::PositivityViolation { .. } => "PositivityViolation",
            Error::ModularDivergence { .. } => "ModularDivergence",
            Error::BranchCutProximity { .. } => "BranchCutProximity",
            Error::Overflow { .. } => "Overflow",
            Error::GeneratorMismatch { .. } => "GeneratorMismatch",
            Error::Domain(_) => "DomainError",
            Error::TruncationNotConverged { .. } => "TruncationNotConverged",
            Error::Schema { .. } => "SchemaError",
            Error::FileNotFound(_) => "FileNotFound",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
