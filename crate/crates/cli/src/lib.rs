//! Batch driver for motion reconstruction: configuration and the pipelines
//! behind each subcommand.

pub mod config;
pub mod pipeline;

pub use config::RunConfig;
