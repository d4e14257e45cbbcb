//! Distributed-SGD simulator with adaptive Top-K gradient sparsification.
//!
//! The library is organized around five pieces:
//!
//! - [`sparsify`]: the Top-K compression operator, sparse gradients,
//!   compression-error measurement, and error-compensation memory.
//! - [`schedule`]: closed-form sparsity schedules (two-level, with a low-k
//!   middle block) and evaluators for the associated convergence bounds.
//! - [`problems`]: loss functions with stochastic gradient oracles
//!   (synthetic quadratic, logistic regression, one-hidden-layer MLP),
//!   IDX dataset ingestion, and data sharding across workers.
//! - [`engine`]: the round-based parameter-server simulation (worker
//!   gradients, compression, aggregation, update).
//! - [`harness`]: experiment configuration, multi-arm comparison at equal
//!   communication budget, and CSV metrics persistence.

pub mod engine;
pub mod harness;
pub mod problems;
pub mod schedule;
pub mod sparsify;
