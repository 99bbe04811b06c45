//! Central solution space dimension reduction: sufficient dimension reduction
//! estimators refined by minimizing a kernel moment of the residual
//! `X − E(X | ηᵀX)` over orthonormal frames parameterized by Givens angles.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod data;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod fit;
pub mod kernels;
pub mod linalg;
pub mod objective;
pub mod optimizer;
pub mod rotations;

pub use data::{covariance, load_csv, write_csv, Dataset, ResponseColumn};
pub use error::{CssError, Result};
pub use estimators::{
    candidate_matrix, classical_fit, leading_span, CandidateMatrix, ClassicalFit,
};
pub use evaluation::{
    gen_design, gen_response, loo_cv, run_benchmark, trace_correlation, BenchResult, Model,
    SimConfig,
};
pub use fit::{fit, FitConfig, FitReport, KernelParams, Method};
pub use kernels::{GKernel, HBasis, PreparedKernel};
pub use objective::{fhat, fit_css, CssFit, CssObjective, CssOptions, GBasis, GBasisKind};
pub use optimizer::{minimize, multistart, MinimizeResult, OptimOptions};
pub use rotations::{frame_to_angles, AngleVector, BasisMatrix};
