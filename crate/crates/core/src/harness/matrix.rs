//! Matrix specification files and their Cartesian expansion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Algorithm, ExperimentConfig, Phase};
use crate::classifiers::{LogRegParams, SvmParams, DEFAULT_K};
use crate::error::{Error, Result};
use crate::metering::{ModelClock, DEFAULT_OPS_PER_SECOND};

/// A dataset on the matrix axis. Synthetic unless `path` names a
/// class-per-subdirectory image tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub n_classes: usize,
    #[serde(default = "one")]
    pub channels: usize,
    /// Whether the source images are in color, independent of `channels`.
    #[serde(default)]
    pub color: bool,
    #[serde(default = "half")]
    pub sparsity: f64,
    #[serde(default = "one_f")]
    pub class_separation: f64,
    /// Generation seed; derived from the name when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn one() -> usize {
    1
}
fn half() -> f64 {
    0.5
}
fn one_f() -> f64 {
    1.0
}

impl DatasetSpec {
    pub fn synthetic(name: &str, n_classes: usize, channels: usize, color: bool, sparsity: f64) -> Self {
        Self {
            name: name.to_string(),
            n_classes,
            channels,
            color,
            sparsity,
            class_separation: 1.0,
            seed: None,
            path: None,
        }
    }

    /// Synthetic stand-ins for the five public corpora: handwritten digits,
    /// clothing, small color photos, chest X-rays and faces.
    pub fn paper_analogs() -> Vec<Self> {
        vec![
            Self::synthetic("digits", 10, 1, false, 0.8),
            Self::synthetic("fashion", 10, 1, false, 0.5),
            Self::synthetic("cifar", 10, 3, true, 0.0),
            Self::synthetic("chest", 2, 1, false, 0.1),
            Self::synthetic("faces", 7, 1, true, 0.05),
        ]
    }

    pub fn generation_seed(&self) -> u64 {
        // FNV-1a, stable across platforms and releases
        self.seed.unwrap_or_else(|| {
            self.name
                .bytes()
                .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
        })
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains([',', '"', '\n']) {
            return Err(Error::config("datasets.name", format!("`{}` is empty or not CSV-safe", self.name)));
        }
        if self.n_classes < 2 {
            return Err(Error::config("datasets.n_classes", format!("`{}` needs >= 2 classes", self.name)));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::config("datasets.channels", format!("`{}`: must be 1 or 3", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierParams {
    pub k: usize,
    pub logreg: LogRegParams,
    pub svm: SvmParams,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            logreg: LogRegParams::default(),
            svm: SvmParams::default(),
        }
    }
}

/// Energy source for a matrix run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeterSpec {
    /// Analytical device model; `profiles` maps device names to profile
    /// files, otherwise the built-in profiles are used.
    Model {
        #[serde(default = "default_clock")]
        clock: ModelClock,
        #[serde(default)]
        profiles: BTreeMap<String, PathBuf>,
    },
    /// Recorded power trace (`t_s,volts,amps`), consumed session by session.
    Trace { path: PathBuf },
}

fn default_clock() -> ModelClock {
    ModelClock::Work {
        ops_per_second: DEFAULT_OPS_PER_SECOND,
    }
}

impl Default for MeterSpec {
    fn default() -> Self {
        MeterSpec::Model {
            clock: default_clock(),
            profiles: BTreeMap::new(),
        }
    }
}

/// Axis values and run settings of an experiment matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixSpec {
    pub algorithms: Vec<Algorithm>,
    pub datasets: Vec<DatasetSpec>,
    pub phases: Vec<Phase>,
    pub sizes: Vec<usize>,
    pub resolutions: Vec<usize>,
    pub devices: Vec<String>,
    pub workers: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub output: PathBuf,
    pub meter: MeterSpec,
    pub classifiers: ClassifierParams,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            datasets: DatasetSpec::paper_analogs(),
            phases: Phase::ALL.to_vec(),
            sizes: vec![300, 600, 900, 1200, 1500],
            resolutions: vec![17, 22, 28],
            devices: vec!["rpi3".into()],
            workers: vec![1],
            repetitions: 5,
            seed: 0,
            train_fraction: 0.8,
            output: PathBuf::from("records.csv"),
            meter: MeterSpec::default(),
            classifiers: ClassifierParams::default(),
        }
    }
}

impl MatrixSpec {
    /// Reads a TOML spec. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: Self = toml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut spec.output);
        match &mut spec.meter {
            MeterSpec::Model { profiles, .. } => profiles.values_mut().for_each(rebase),
            MeterSpec::Trace { path } => rebase(path),
        }
        for d in &mut spec.datasets {
            if let Some(p) = &mut d.path {
                rebase(p);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("algorithms", self.algorithms.len()),
            ("datasets", self.datasets.len()),
            ("phases", self.phases.len()),
            ("sizes", self.sizes.len()),
            ("resolutions", self.resolutions.len()),
            ("devices", self.devices.len()),
            ("workers", self.workers.len()),
        ];
        for (name, len) in axes {
            if len == 0 {
                return Err(Error::config(name, "axis has no values"));
            }
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions", "must be >= 1"));
        }
        if self.sizes.contains(&0) {
            return Err(Error::config("sizes", "sizes must be >= 1"));
        }
        if self.resolutions.contains(&0) {
            return Err(Error::config("resolutions", "resolutions must be >= 1"));
        }
        if self.workers.contains(&0) {
            return Err(Error::config("workers", "worker counts must be >= 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
        }
        for d in &self.datasets {
            d.validate()?;
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("datasets", "dataset names must be unique"));
        }
        Ok(())
    }

    pub fn n_runs(&self) -> usize {
        self.algorithms.len()
            * self.datasets.len()
            * self.phases.len()
            * self.sizes.len()
            * self.resolutions.len()
            * self.devices.len()
            * self.workers.len()
            * self.repetitions
    }
}

/// The full Cartesian product, algorithm-major: algorithm, dataset, size,
/// resolution, device, workers, phase. Phase varies fastest so that each
/// train configuration is immediately followed by its test configuration.
/// Every config carries the spec seed; runners derive per-repetition seeds.
pub fn enumerate_matrix(spec: &MatrixSpec) -> Result<Vec<ExperimentConfig>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.n_runs() / spec.repetitions);
    for &algorithm in &spec.algorithms {
        for d in &spec.datasets {
            for &n_images in &spec.sizes {
                for &resolution in &spec.resolutions {
                    for device in &spec.devices {
                        for &workers in &spec.workers {
                            for &phase in &spec.phases {
                                out.push(ExperimentConfig {
                                    algorithm,
                                    phase,
                                    dataset: d.name.clone(),
                                    n_images,
                                    resolution,
                                    channels: d.channels,
                                    n_classes: d.n_classes,
                                    color: d.color,
                                    device: device.clone(),
                                    workers,
                                    seed: spec.seed,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cardinality() {
        let spec = MatrixSpec::default();
        let configs = enumerate_matrix(&spec).unwrap();
        assert_eq!(configs.len(), 450);
        assert_eq!(spec.n_runs(), 2250);
        let mut unique = configs.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), 450);
        // algorithm-major: the first third is all knn
        assert!(configs[..150].iter().all(|c| c.algorithm == Algorithm::Knn));
        assert_eq!(configs[0].phase, Phase::Train);
        assert_eq!(configs[1].phase, Phase::Test);
    }

    #[test]
    fn single_and_empty_axes() {
        let spec = MatrixSpec {
            algorithms: vec![Algorithm::Svm],
            datasets: vec![DatasetSpec::synthetic("d", 2, 1, false, 0.0)],
            phases: vec![Phase::Train],
            sizes: vec![300],
            resolutions: vec![17],
            ..Default::default()
        };
        assert_eq!(enumerate_matrix(&spec).unwrap().len(), 1);
        let empty = MatrixSpec { sizes: vec![], ..spec };
        assert!(matches!(enumerate_matrix(&empty), Err(Error::Config { field, .. }) if field == "sizes"));
    }

    #[test]
    fn toml_spec() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        std::fs::write(
            &p,
            r#"
algorithms = ["logreg"]
phases = ["train", "test"]
sizes = [300]
resolutions = [17, 22]
repetitions = 2
output = "out.csv"

[[datasets]]
name = "tiny"
n_classes = 2
sparsity = 0.0

[meter]
kind = "model"
clock = { kind = "work", ops_per_second = 1e6 }
profiles = { rpi3 = "rpi3.toml" }

[classifiers.logreg]
learning_rate = 0.05
iterations = 100
l2 = 0.0
seed = 0
"#,
        )
        .unwrap();
        let spec = MatrixSpec::load(&p).unwrap();
        assert_eq!(spec.output, dir.path().join("out.csv"));
        assert_eq!(spec.n_runs(), 8);
        assert_eq!(spec.classifiers.logreg.iterations, 100);
        assert_eq!(spec.classifiers.k, DEFAULT_K);
        match &spec.meter {
            MeterSpec::Model { clock, profiles } => {
                assert_eq!(*clock, ModelClock::Work { ops_per_second: 1e6 });
                assert_eq!(profiles["rpi3"], dir.path().join("rpi3.toml"));
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "algorithms = [\"knn\"]\nbogus = 1\n").unwrap();
        assert!(MatrixSpec::load(&p).is_err());
    }
}
