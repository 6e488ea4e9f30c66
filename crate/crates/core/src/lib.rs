//! Examiner-design instrumental-variable toolkit for call-center data.
//!
//! The crate estimates the causal effect of reported call satisfaction on
//! downstream outcomes (recontact, claims) by exploiting the quasi-random
//! assignment of agents to calls. It bundles everything needed to run and
//! validate the design end to end: call-log ingestion, family identity
//! resolution, time-span fixed effects, the residualized leave-one-out
//! agent instrument, OLS/2SLS with high-dimensional fixed-effect
//! absorption and cluster-robust inference, validity diagnostics, and a
//! multi-queue discrete-event call-center simulator with known ground
//! truth that serves as the verification oracle.
//!
//! The crate is `no_std` (with `alloc`); file IO, the CLI, and report
//! rendering live in the companion `agentiv-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod absorb;
pub mod diagnostics;
pub mod dist;
pub mod estimator;
pub mod family;
pub mod ingest;
pub mod instrument;
pub mod kv;
pub mod linalg;
pub mod panel;
pub mod pipeline;
pub mod rng;
pub mod sim;
pub mod time;

mod error;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
