//! Online approximation of feedback-Nash equilibria for N-player nonzero-sum differential
//! games on control-affine systems, using concurrent-learning actor-critic updates with
//! Bellman errors extrapolated to a fixed set of states.
//!
//! Module map:
//! - [`game_model`]: dynamics, costs and coupling matrices.
//! - [`basis`]: value-function features and Jacobians.
//! - [`bellman`]: policies, regressors, Bellman errors, extrapolation grids.
//! - [`update_laws`]: critic, gain-matrix and actor laws plus the rank monitor.
//! - [`simulator`]: fixed-step integration of the coupled system and run records.
//! - [`gain_advisor`]: bound constants, sufficient gain conditions, compact-set selection.
//! - [`lq_oracle`]: coupled algebraic Riccati solver used as ground truth.
//! - [`config`]: JSON configuration documents.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bellman;
pub mod config;
pub mod error;
pub mod exec;
pub mod gain_advisor;
pub mod game_model;
pub mod linalg;
pub mod lq_oracle;
pub mod polynomial;
pub mod simulator;
pub mod update_laws;

pub use error::{Error, Result};
pub use exec::Execution;
