//! Checks of the wide-network theory: the limit kernel, initialization
//! diagnostics, the block Gauss-Seidel view of mini-batch GGN and rate fits.

mod dynamics;
mod gauss_seidel;
mod kernel;
mod rates;
mod report;

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::model::ModelError;
use crate::optim::OptimError;

pub use dynamics::{
    verify_residual_dynamics, DynamicsReport, ORACLE_TOL, PATH_QUADRATURE_POINTS, RATE_SLACK, UPDATE_FORMULA_TOL,
};
pub use gauss_seidel::{
    build_iteration_matrix, gauss_seidel_epoch, spectral_report, IterationDecomposition, SpectralReport,
};
pub use kernel::{
    init_diagnostics, limit_kernel_mc, InitDiagnostics, KernelEstimate, DEFAULT_MC_SAMPLES, DIAGNOSTIC_DELTA,
    MIN_MC_SAMPLES,
};
pub use rates::{fit_rates, fit_rates_with_floor, RateFit, CONVERGENCE_FLOOR};
pub use report::{Check, ConvergenceReport, Verdict};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NtkError {
    #[error("insufficient data for a rate fit: {0}")]
    InsufficientData(String),
    #[error("diagonal block {block} of the Gram matrix is singular")]
    SingularDiagonalBlock { block: usize },
    #[error("block size {b} does not divide n = {n}")]
    BlockSize { n: usize, b: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

pub type Result<T> = std::result::Result<T, NtkError>;
