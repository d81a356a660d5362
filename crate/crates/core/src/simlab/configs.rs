use serde::{Deserialize, Serialize};

use super::{extinct_cohort_experiment, tabulation_experiment, ExtinctCohortConfig, TabulationConfig};
use crate::error::{Error, Result};

/// A simulation experiment as read from a JSON configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    ExtinctCohort(ExtinctCohortConfig),
    Tabulation(TabulationConfig),
}

/// Bundled configurations by name.
pub const BUNDLED: [(&str, &str); 2] = [
    ("appendix_b", include_str!("../../configs/appendix_b.json")),
    ("japan_tabulation", include_str!("../../configs/japan_tabulation.json")),
];

pub fn bundled_config(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::input(format!("no bundled configuration '{name}'")))?;
    ExperimentConfig::from_json(text)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::input(format!("bad experiment configuration: {e}")))
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::ExtinctCohort(c) => c.seed,
            ExperimentConfig::Tabulation(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::ExtinctCohort(c) => c.seed = seed,
            ExperimentConfig::Tabulation(c) => c.seed = seed,
        }
    }

    pub fn set_replicates(&mut self, n: usize) {
        match self {
            ExperimentConfig::ExtinctCohort(c) => c.replicates = n,
            ExperimentConfig::Tabulation(c) => c.replicates = n,
        }
    }

    /// Runs the experiment, returning its JSON summary and per-replicate CSV.
    pub fn run(&self) -> Result<(serde_json::Value, String)> {
        let to_json = |v: serde_json::Result<serde_json::Value>| v.map_err(|e| Error::internal(e.to_string()));
        match self {
            ExperimentConfig::ExtinctCohort(c) => {
                let r = extinct_cohort_experiment(c)?;
                Ok((to_json(serde_json::to_value(&r))?, r.to_csv()))
            }
            ExperimentConfig::Tabulation(c) => {
                let r = tabulation_experiment(c)?;
                Ok((to_json(serde_json::to_value(&r))?, r.to_csv()))
            }
        }
    }
}
