//! Multilevel residual-based a posteriori error estimation for P1 finite
//! element Poisson problems on the unit square / unit cube.
//!
//! The crate builds a nested mesh hierarchy, assembles the per-level
//! operators, restricts finest-level residuals to every level and evaluates
//! the fine-level and coarsest-level terms that enter multilevel error
//! estimates, including an adaptive CG approximation of the coarsest-level
//! term with Gauss-Radau error bounds. A small experiment driver reproduces
//! the level-robustness and coarse-size-robustness studies.

pub mod assembly;
pub mod estimator;
pub mod experiments;
pub mod io;
pub mod la;
pub mod mesh;
pub mod problem;
pub mod quad;
pub mod solver;
pub mod transfer;

mod par;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate element {elem}: {what}")]
    DegenerateElement { elem: usize, what: &'static str },
    #[error("zero or non-positive diagonal entry at row {0}")]
    ZeroDiagonal(usize),
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("iteration did not reach tolerance {tol:e} within {max_iter} steps (residual {res:e})")]
    CgNoConvergence {
        tol: f64,
        max_iter: usize,
        res: f64,
    },
    #[error("system size {n} exceeds the direct-solve cutoff {cutoff}; use the adaptive coarse variant")]
    AboveDirectCutoff { n: usize, cutoff: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("efficiency index undefined: error is zero (snapshot excluded)")]
    ZeroError,
    #[error("missing estimator constants: {0:?}")]
    MissingConstants(Vec<&'static str>),
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
