//! Distributed bandit online convex optimization with time-varying coupled
//! inequality constraints.
//!
//! A network of learners repeatedly picks local decisions, observes only
//! function values of its local loss and constraint (bandit feedback), and
//! exchanges dual variables with neighbours over a time-varying digraph. Two
//! learner algorithms are provided: a one-point estimator variant that plays a
//! perturbed copy of an internal iterate, and a two-point estimator variant
//! that queries each function twice per round.
//!
//! Module map:
//! - [`geometry`]: decision sets, projection, shrinkage, `[.]_+`.
//! - [`estimators`]: sphere sampling and zeroth-order gradient estimators.
//! - [`network`]: random communication graphs, mixing matrices, consensus.
//! - [`problem`]: quadratic adversary, bandit oracle, problem constants.
//! - [`algorithms`]: step-size schedules, learner updates, the simulator.
//! - [`metrics`]: regret, constraint violation, offline comparators, bounds.
//! - [`harness`]: experiment configuration, seeded ensembles, CSV/JSON output.

pub mod algorithms;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod network;
pub mod problem;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{clip_nonnegative, ConvexSet};
pub use nalgebra::{DMatrix, DVector};
