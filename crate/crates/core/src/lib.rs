//! Linear dilation-erosion regression.
//!
//! The model is the difference of two max-affine functions,
//!
//! ```text
//! tau(x) = max_i (w_i . x + a_i) - max_j (m_j . x + b_j)
//! ```
//!
//! This crate holds the pure numerical side: the model and its flat
//! parameter encoding, least-squares losses and subgradients, a convex QP
//! solver, the three trainers (stochastic subgradient descent, DCA and
//! penalty convex-concave procedure), data transforms and the Wilcoxon
//! signed-rank test. It is `no_std` (with `alloc`); the `std` feature only
//! adds wall-clock timing to training reports.
//!
//! ```
//! use lder_core::{LDerParams, ModelDims};
//!
//! let dims = ModelDims::new(2, 2, 1).unwrap();
//! let p = LDerParams::from_parts(dims, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], &[0.0, 0.0], &[0.0]).unwrap();
//! assert_eq!(p.predict(&[2.0, 5.0]).unwrap(), 5.0);
//! ```

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod qp;
pub mod stats;
pub mod train;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use data::{
    impute_mean, kfold_split, standardize, synth_pwl, Dataset, FoldPlan, StandardizeStats,
};
pub use error::{Error, Result};
pub use linalg::{CsrMatrix, Matrix};
pub use loss::{
    active_difference_vector, finite_diff_grad, grad_mse, indicator_vector, mape, mse,
    SparseAlphaVec, TrainingSet,
};
pub use model::{dilation, erosion, LDerParams, ModelDims};
pub use qp::{kkt_residual, solve_qp, QpProblem, QpSettings, QpSolution, QpSolver, QpStatus, QuadTerm};
pub use stats::{wilcoxon_signed_rank, WilcoxonResult};
pub use train::dca::{assemble_dca_subproblem, dc_components, train_dca, train_dca_from, DcDecomposition, DcaConfig};
pub use train::dccp::{
    assemble_ccp_subproblem, linearize_branch, train_dccp, train_dccp_from, Branch, CcpConfig,
};
pub use train::sgd::{train_sgd, train_sgd_from, SgdConfig};
pub use train::{init_params, Termination, TrainReport};
