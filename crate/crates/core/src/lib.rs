//! Batch crowdsourcing task assignment.
//!
//! Votes are turned into worker expertise, answer confidence and question
//! easiness by a dual-cycle fixed-point estimator ([`inference`]). At every
//! batch the available workers are packed into as few questions as possible
//! without overshooting any question's remaining easiness budget
//! ([`assignment`]). [`simulator`] drives complete synthetic or replayed runs
//! and [`dataio`] reads traces and writes reports.

pub mod assignment;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod inference;
pub mod simulator;

pub use error::{Error, Result};
