//! Sparse regression with pairwise interactions under weak or strong hierarchy.
//!
//! The model is `y = x^T v + x^T theta x`, fitted by penalized least squares
//! where each main effect bounds the norm of its interaction row. The solvers
//! work on the epigraphical form of that penalty with a primal-dual
//! forward-backward iteration whose only nontrivial steps are closed-form
//! projections onto l1 and l-inf epigraphs.

// `!(x >= 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod objective;
pub mod prox;
pub mod solver;

pub use datagen::{generate, DataGenConfig, GeneratedData, GroundTruth};
pub use error::{Error, Result};
pub use evaluation::{cross_validate, mse, CvOptions, CvRecord, CvResult, CvSource, Stat};
pub use io::RunManifest;
pub use model::{
    Dataset, DualState, Hierarchy, IterRecord, ModelParams, Norm, RegConfig, Role, SolveReport,
    SolverConfig, Termination,
};
pub use solver::{solve, solve_strong, solve_weak, SplittingSpec};
