use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::detect::StatKind;
use crate::error::{Error, Result};
use crate::limit_sim;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Limit-law draws simulated for p-values in `detect` and `estimate`.
pub const DEFAULT_POOL_REPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Detect,
    Estimate,
    Critvals,
    Simulate,
    Experiment,
}

impl Command {
    /// Replications used when none are given.
    pub fn default_reps(self) -> usize {
        match self {
            Command::Critvals => limit_sim::DEFAULT_REPS,
            Command::Experiment => super::experiment::DEFAULT_EXPERIMENT_REPS,
            Command::Detect | Command::Estimate => DEFAULT_POOL_REPS,
            Command::Simulate => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatChoice {
    Sup,
    Int,
    Both,
}

impl StatChoice {
    pub fn kinds(self) -> &'static [StatKind] {
        match self {
            StatChoice::Sup => &[StatKind::Sup],
            StatChoice::Int => &[StatKind::Int],
            StatChoice::Both => &[StatKind::Sup, StatKind::Int],
        }
    }
}

/// Everything a run depends on; echoed verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_path: Option<PathBuf>,
    pub alpha: f64,
    pub statistic: StatChoice,
    pub seed: u64,
    pub grid_points: usize,
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exact_regressor_columns: Vec<String>,
    #[serde(default)]
    pub intercept: bool,
    #[serde(default)]
    pub rescale: bool,
    /// Scenario (simulate) or grid (experiment) TOML file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_path: Option<PathBuf>,
    /// Quantile table file replacing the published critical values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            data_path: None,
            sigma_path: None,
            alpha: DEFAULT_ALPHA,
            statistic: StatChoice::Both,
            seed: DEFAULT_SEED,
            grid_points: limit_sim::DEFAULT_GRID_POINTS,
            reps: command.default_reps(),
            output_path: None,
            exact_regressor_columns: Vec::new(),
            intercept: false,
            rescale: false,
            config_path: None,
            table_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.grid_points < 2 {
            return Err(Error::Config(format!("grid points must be ≥ 2, got {}", self.grid_points)));
        }
        let needs_data = matches!(self.command, Command::Detect | Command::Estimate);
        if needs_data && self.data_path.is_none() {
            return Err(Error::Config("--data is required".into()));
        }
        let needs_config = matches!(self.command, Command::Simulate | Command::Experiment);
        if needs_config && self.config_path.is_none() {
            return Err(Error::Config("--config is required".into()));
        }
        if self.command == Command::Critvals && self.reps == 0 {
            return Err(Error::Config("reps must be ≥ 1".into()));
        }
        for path in [&self.data_path, &self.sigma_path, &self.config_path, &self.table_path]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }
}
