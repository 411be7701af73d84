//! Reverse-mode autodiff engine and numeric utilities.
//!
//! Everything downstream (datasets, models, objectives, baselines) builds on
//! the pieces here: dense tensors generic over f32/f64, an eager tape graph
//! with exact pathwise gradients through sampling, Adam, a finite-difference
//! verifier, and a pinned deterministic random number generator.

pub mod adam;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::{Error, Result};
pub use gradcheck::{fd_compare, finite_difference_check, FdReport, FdSettings};
pub use graph::{log_sum_exp, sigmoid, softplus, Gradients, Graph, NodeId};
pub use rng::{derive_seed, Rng};
pub use stats::{RunningMean, RunningMeanVar};
pub use tensor::{fl, lane_sum, Real, Tensor};
