//! Pipeline orchestration for the `sidekick` command.

pub mod config;
pub mod pipeline;
