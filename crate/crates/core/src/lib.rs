//! Active-inference navigation over a growing topological map.
//!
//! The crate is organised around the agent's generative model:
//!
//! - [`model`]: nodes, Dirichlet parameter banks, pose anchors, map export
//! - [`inference`]: joint state/pose filtering and kidnap detection
//! - [`structure`]: candidate proposal and model growth
//! - [`planner`]: policy enumeration, expected free energy, transition learning
//! - [`sim`]: deterministic grid worlds, ray sensing, a frontier baseline
//! - [`harness`]: scenario configs, agent loops, records and reports
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod error;
pub mod harness;
pub mod inference;
pub mod model;
pub mod planner;
pub mod sim;
pub mod structure;

pub use error::{Error, Result};
