use std::path::PathBuf;

use anyhow::{ensure, Result};
use dermaudit::relevance::DEFAULT_TAU;
use dermaudit::triage::Thresholds;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Settings shared by every batch command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub tau: f64,
    pub thresholds: Thresholds,
    pub confidence: f64,
    /// Worker threads; output never depends on it.
    pub jobs: usize,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            out: out.into(),
            tau: DEFAULT_TAU,
            thresholds: Thresholds::default(),
            confidence: DEFAULT_CONFIDENCE,
            jobs: 1,
        }
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            (0.0..=1.0).contains(&self.tau),
            "tau {} outside [0, 1]",
            self.tau
        );
        ensure!(
            self.confidence > 0.0 && self.confidence < 1.0,
            "confidence {} outside (0, 1)",
            self.confidence
        );
        ensure!(self.jobs >= 1, "jobs must be at least 1");
        Ok(())
    }
}
