//! Batch front end: saliency, relevance, triage and statistics over a case manifest.

pub mod commands;
pub mod config;
pub mod fixtures;
pub mod report;

pub use config::RunConfig;
pub use report::{CaseError, CommandReport};
