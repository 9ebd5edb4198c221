//! Config-driven experiments on top of the `hyperqst` library: single runs,
//! photon-budget and ancilla sweeps, IC audits, the intensity-ambiguity
//! demonstrations and the two-photon round trip.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::CliError;
