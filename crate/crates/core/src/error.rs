use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("adjacency matrix has nonzero diagonal entry at unit {0}")]
    NonzeroDiagonal(usize),
    #[error("adjacency matrix has a negative or non-finite entry at ({0}, {1})")]
    InvalidEntry(usize, usize),
    #[error("unit {0} has no neighbours and cannot be row-normalized")]
    IsolatedUnit(usize),
    #[error("weights matrix has a complex eigenvalue (imaginary part {0:e})")]
    ComplexSpectrum(f64),
    #[error("rho = {rho} lies outside the admissible interval ({lo}, {hi})")]
    RhoOutOfRange { rho: f64, lo: f64, hi: f64 },
    #[error("matrix is singular: {0}")]
    Singular(String),
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("residual variance {0:e} is degenerate")]
    DegenerateVariance(f64),
    #[error("parameter outside its domain: {0}")]
    Domain(String),
    #[error("optimizer did not converge after {iterations} iterations (best rho = {best_rho})")]
    Convergence { iterations: usize, best_rho: f64, best_value: f64 },
    #[error("information matrix is singular (condition number {0:e})")]
    SingularInformation(f64),
    #[error("non-finite value inside the finite-difference stencil at coordinate {0}")]
    Stencil(usize),
    #[error("invalid focus specification: {0}")]
    FocusSpec(String),
    #[error(
        "{p} covariates give too many submodels for an exhaustive sweep (limit 20); pass an explicit candidate list"
    )]
    SweepTooLarge { p: usize },
    #[error("kernel bandwidth {0} is too small: every weight underflows")]
    BandwidthTooSmall(f64),
    #[error("variable has zero variance")]
    ZeroVariance,
}
