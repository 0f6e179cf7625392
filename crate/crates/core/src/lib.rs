//! Greedy low-rank learning.
//!
//! Solves `min f(X) s.t. rank(X) ≤ r` for objectives defined on the observed
//! entries of a partially observed matrix, by adding one rank-one (or, for
//! nonsmooth objectives, a few rank-one) terms per iteration taken from the
//! leading singular vectors of the current (sub)gradient.
//!
//! * [`sparse`]: observed entries, low-rank iterates, sparse-plus-low-rank
//!   operators.
//! * [`power`]: rank-one SVD by power iteration and greedy rank-k deflation.
//! * [`loss`]: square, logistic and ℓ1 objectives with an optional ridge.
//! * [`smooth`] / [`nonsmooth`]: the two solvers.
//! * [`data`], [`model_io`], [`metrics`], [`experiment`]: ingestion,
//!   persistence, evaluation and end-to-end runs.

// `!(x > 0.0)` rejects NaN as well; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod experiment;
mod linalg;
pub mod loss;
pub mod metrics;
pub mod model_io;
pub mod nonsmooth;
pub mod power;
pub mod qn;
pub mod rng;
pub mod selftest;
pub mod smooth;
pub mod sparse;
pub mod synthetic;
pub mod trace;

pub use error::{Error, Result};
pub use loss::{Curvature, LossKind, LossSpec};
pub use nonsmooth::{fit_nonsmooth, fit_nonsmooth_with, NonsmoothConfig, NonsmoothFit, StepMode};
pub use power::{greedy_rank_k, rank1_svd, GreedyApprox, PowerConfig, SingularTriple};
pub use smooth::{
    fit_smooth, fit_smooth_with, refine_economic, refine_full, Refine, SmoothFit, SolverConfig,
};
pub use sparse::{
    observed_values, residual_op, LinearOperator, LowRankModel, ObservedMatrix, SparsePlusLowRankOp,
};
pub use trace::TraceRecord;
