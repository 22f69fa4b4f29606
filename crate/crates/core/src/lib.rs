//! Age-structured branching processes in random ergodic environments.
//!
//! The crate simulates multitype Galton-Watson processes whose type is the
//! integer age of an individual (infinite Leslie-matrix mean operators),
//! computes their quenched mean semigroup exactly on the reachable age
//! window, extracts harmonic profiles, eigenvalue factors and Lyapunov
//! exponents, builds the fundamental martingale `W_n` and the size-biased
//! spine construction, and ships decidable checkers for every assumption the
//! limit theorems need.
//!
//! Modules mirror that split:
//! - [`model`]: populations, offspring laws, environments, the model spec;
//! - [`semigroup`]: exact quenched mean-operator computations;
//! - [`simulate`]: forward Monte Carlo and ensemble experiments;
//! - [`spine`]: the size-biased tree with a marked spine;
//! - [`verify`]: assumption checkers and numeric lemma verification;
//! - [`fixtures`]: the bundled specs used across tests and experiments.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

pub mod error;
pub mod fixtures;
pub mod model;
pub mod numeric;
pub mod report;
pub mod rng;
pub mod semigroup;
pub mod simulate;
pub mod spine;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    AgePopulation, AgeProfile, EnvProcessSpec, EnvSequence, LeslieSpec, OffspringFamily,
};
