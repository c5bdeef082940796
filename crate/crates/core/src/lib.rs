//! Local Volt/Var control on radial distribution feeders.
//!
//! The crate builds the linear voltage sensitivity matrices of a tree
//! network, runs signal-taking and signal-anticipating control dynamics
//! against the linear model or a DistFlow power-flow sweep, and measures the
//! efficiency loss of anticipation together with its spectral bounds.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acflow;
pub mod controls;
pub mod dynamics;
pub mod equilibrium;
mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod sensitivity;
pub mod topology;

pub use error::{Error, Result};
