//! Finite-volume simulator for a cross-diffusion system in which the
//! diffusive mobility of a density u is a decreasing function of a chemical
//! signal v, together with a built-in auditing layer that verifies the
//! structural estimates (mass, positivity, comparison envelopes, entropy and
//! duality inequalities) on every run.

pub mod audit;
pub mod cli;
pub mod elliptic;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod mms;
pub mod motility;
pub mod scheme;
pub mod snapshot;

pub use error::{KymoError, Result};
