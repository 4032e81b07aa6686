//! Single-qubit disentanglement as a probe of quantum phase transitions.
//!
//! The crate is organized bottom-up:
//!
//! - [`models`]: TFIM / XXZ Hamiltonians on periodic chains, behind the
//!   [`models::SpinModel`] trait and a name-keyed [`models::ModelRegistry`].
//! - [`solver`]: ground-state eigensolvers (dense, Lanczos) behind
//!   [`solver::GroundStateSolver`].
//! - [`state`]: statevectors, gates, partial traces and von Neumann entropy.
//! - [`circuit`]: windowed gate sets, circuit architectures, the agent-facing
//!   one-hot encoding and the line-oriented circuit file format.
//! - [`optimizer`]: BFGS over rotation angles minimizing the target-qubit entropy.
//! - [`oracle`]: the exact minimal window entropy from the grouped spectrum,
//!   the unitary that attains it, and a brute-force unitary search.
//! - [`agent`]: the circuit-building environment and the DQN that drives it.
//! - [`scan`]: training pairs, coupling scans, crossing detection, reference
//!   curves and size transfer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod circuit;
pub mod config;
pub mod error;
pub mod models;
pub mod optimizer;
pub mod oracle;
pub mod rng;
pub mod scan;
pub mod solver;
pub mod state;
pub mod textfmt;

pub use error::{Error, Result};

/// Version string stamped into every output directory.
pub const ARTIFACT_VERSION: &str = concat!("disentangle ", env!("CARGO_PKG_VERSION"));
