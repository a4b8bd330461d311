//! Orchestration of the velocity-surrogate workflow: configuration, the
//! synth → train → evaluate → predict → report steps, and figures.

pub mod config;
pub mod figures;
pub mod pipeline;

pub use config::RunConfig;
