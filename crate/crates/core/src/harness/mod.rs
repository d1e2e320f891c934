//! Scenario running: agent loops, experiment drivers, records and reports.

pub mod agent;
pub mod config;
pub mod obstacle;
pub mod report;
pub mod run;
pub mod scenario;
pub mod tolman;

pub use agent::{AgentConfig, AgentParams, AifAgent};
pub use run::{run_aif_episode, run_frontier_episode, EpisodeOutcome, EpisodeSpec, StepRecord};
