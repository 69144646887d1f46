//! Differentiable prototype-based clustering with the soft quantization loss.
//!
//! The library centers on one algebraic fact: the soft quantization loss over
//! a batch of features decomposes exactly into a simplex-constrained
//! reconstruction error plus a non-negative weighted prototype variance. The
//! variance gradient acts as an implicit separation force on the prototypes,
//! and the frozen-feature dynamics admit a Lyapunov energy whose monotone
//! decrease is verified at runtime.
//!
//! Module map:
//! - [`numerics`] — dense matrices, the seeded portable RNG, statistics
//! - [`simplex`] — simplex projection, entropy, KL to uniform
//! - [`assignment`] — soft/hard assignments, covariance diagnostics
//! - [`losses`] — all scalar objectives and the reduced energy
//! - [`gradients`] — hand-derived gradients + finite-difference harness
//! - [`dcl`] — prototypes as differentiable outputs P = XᵀW₂
//! - [`backbone`] — MLP feature extractor with exact backprop
//! - [`batch_trainer`] — the unified batch training loop
//! - [`incremental_trainer`] — single-pass streaming training
//! - [`reduced_flow`] — projected gradient descent on the frozen energy
//! - [`baselines`] — k-means, mini-batch k-means, PCA, DeepCluster-lite
//! - [`metrics`] — Hungarian accuracy, NMI, ARI
//! - [`datasets`] — synthetic generators and CSV ingestion
//!
//! Per-sample inner loops run through [`parallel`], which dispatches to rayon
//! under the default `parallel` feature and falls back to sequential loops
//! without it; reductions are ordered either way, so results are
//! bit-identical across feature sets and thread counts.

pub mod assignment;
pub mod backbone;
pub mod baselines;
pub mod batch_trainer;
pub mod datasets;
pub mod dcl;
pub mod error;
pub mod gradients;
pub mod incremental_trainer;
pub mod losses;
pub mod metrics;
pub mod numerics;
pub mod parallel;
pub mod reduced_flow;
pub mod simplex;

pub use error::{DdclError, Result};
pub use numerics::{Matrix, Rng};
pub use simplex::AssignmentVector;
