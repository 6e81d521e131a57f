//! declab: a simulation laboratory for sequential decision-making on
//! stationary ergodic processes under partial information.
//!
//! The crate builds pair processes (X, Y), runs causal strategies that see
//! only the observations Y, scores them with a catalog of loss functions,
//! and measures the diagnostics that separate pathwise-optimal behavior
//! from merely mean-optimal behavior: time-average losses and regret,
//! weak-optimality probabilities, the optimal asymptotic loss, conditional
//! mixing profiles, and absolute-regularity coefficients.
//!
//! Modules:
//! - [`processes`]: the model catalog and reproducible path sampling.
//! - [`filtering`]: exact filter, bootstrap particle filter, joint smoother.
//! - [`losses`]: loss catalog with coordinate windows and domination bounds.
//! - [`strategies`]: causal decision rules, from blind sequences to the
//!   filter-based mean-optimal rule and the frozen-window construction.
//! - [`evaluation`]: trajectories, regret, weak optimality, and mixing
//!   diagnostics.

pub mod error;
pub mod evaluation;
pub mod filtering;
pub mod losses;
pub mod processes;
pub mod rng;
pub mod strategies;

pub use error::{Error, Result};
