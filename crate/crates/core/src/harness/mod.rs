//! Experiment matrix enumeration, metered execution and record files.

mod matrix;
mod records;
mod runner;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use matrix::{enumerate_matrix, ClassifierParams, DatasetSpec, MatrixSpec, MeterSpec};
pub use records::{export_records, load_records, RecordWriter, RECORD_HEADER};
pub use runner::{
    build_meter, run_experiment, run_matrix, DatasetProvider, ModelCache, RunFailure, RunSummary, SpecProvider,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Knn,
    Svm,
    LogReg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Knn, Algorithm::Svm, Algorithm::LogReg];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Knn => "knn",
            Algorithm::Svm => "svm",
            Algorithm::LogReg => "logreg",
        }
    }

    /// Whether the algorithm can spread work over several cores.
    pub fn supports_workers(self) -> bool {
        self != Algorithm::Svm
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Train, Phase::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown phase `{s}`")))
    }
}

/// One cell of the experiment matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub phase: Phase,
    pub dataset: String,
    pub n_images: usize,
    pub resolution: usize,
    pub channels: usize,
    pub n_classes: usize,
    pub color: bool,
    pub device: String,
    pub workers: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn n_pixels(&self) -> usize {
        self.resolution * self.resolution * self.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Failed => "failed",
        }
    }
}

/// Outcome of one metered phase. Failed runs carry zero duration and energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub config: ExperimentConfig,
    pub rep: usize,
    pub duration_s: f64,
    pub energy_j: f64,
    /// Test phase only.
    pub accuracy: Option<f64>,
    pub status: RunStatus,
}

impl MeasurementRecord {
    pub fn failed(config: ExperimentConfig, rep: usize) -> Self {
        Self {
            config,
            rep,
            duration_s: 0.0,
            energy_j: 0.0,
            accuracy: None,
            status: RunStatus::Failed,
        }
    }

    /// Identity used for resuming; the seed is implied by `rep`.
    pub fn key(&self) -> (ExperimentConfig, usize) {
        (self.config.clone(), self.rep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{a}\""));
        }
        for p in Phase::ALL {
            assert_eq!(p.as_str().parse::<Phase>().unwrap(), p);
        }
        assert!("tree".parse::<Algorithm>().is_err());
    }
}
