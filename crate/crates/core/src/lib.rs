//! An executable located process calculus with crash failures and failure
//! detectors, an encoding of rotating-coordinator-free consensus with a
//! strong failure detector, standard-form representatives of its reachable
//! configurations, and an explicit-state verifier over both semantics.
//!
//! The usual entry points are [`model::Model`], [`verifier::explore`] and
//! the `check_*` functions in [`verifier`].

pub mod ast;
pub mod cli;
pub mod error;
pub mod eval;
pub mod lts;
pub mod model;
pub mod repsem;
pub mod verifier;

pub use error::{Error, Result};
