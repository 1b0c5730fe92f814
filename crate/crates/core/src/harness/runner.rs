//! Metered execution of single experiments and whole matrices.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use log::{info, warn};

use super::matrix::{ClassifierParams, DatasetSpec, MatrixSpec, MeterSpec};
use super::records::{load_records, RecordWriter};
use super::{enumerate_matrix, Algorithm, ExperimentConfig, MeasurementRecord, Phase, RunStatus};
use crate::classifiers::{
    accuracy, knn_fit_metered, knn_predict_metered, logreg_fit_metered, logreg_predict_metered, svm_fit_metered,
    svm_predict_metered, ClassifierModel,
};
use crate::datasets::{generate_synthetic, ingest_images, split, standardize, Dataset, LabeledMatrix, SyntheticSpec};
use crate::error::{Error, Result};
use crate::metering::{DeviceProfile, Meter, PowerTrace, Work};

/// Supplies the dataset variant for a (name, size, resolution) cell.
pub trait DatasetProvider {
    fn variant(&self, name: &str, n_images: usize, resolution: usize) -> Result<Arc<Dataset>>;
}

/// Small insertion-ordered cache that evicts its oldest entry.
struct Bounded<K, V> {
    cap: usize,
    items: Vec<(K, V)>,
}

impl<K: PartialEq, V: Clone> Bounded<K, V> {
    fn new(cap: usize) -> Self {
        Self { cap, items: Vec::new() }
    }

    fn get(&self, k: &K) -> Option<V> {
        self.items.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone())
    }

    fn put(&mut self, k: K, v: V) {
        if self.items.len() == self.cap {
            self.items.remove(0);
        }
        self.items.push((k, v));
    }
}

/// Builds variants from [`DatasetSpec`]s: synthetic data is generated
/// directly at each resolution, image trees are ingested at it; sizes are
/// nested, class-balanced prefixes of that base.
pub struct SpecProvider {
    specs: Vec<DatasetSpec>,
    base_size: usize,
    seed: u64,
    bases: RefCell<Bounded<(String, usize), Arc<Dataset>>>,
    variants: RefCell<Bounded<(String, usize, usize), Arc<Dataset>>>,
}

impl SpecProvider {
    /// `base_size` is the largest size that will be requested.
    pub fn new(specs: Vec<DatasetSpec>, base_size: usize, seed: u64) -> Self {
        Self {
            specs,
            base_size,
            seed,
            bases: RefCell::new(Bounded::new(3)),
            variants: RefCell::new(Bounded::new(4)),
        }
    }

    pub fn from_spec(spec: &MatrixSpec) -> Self {
        Self::new(spec.datasets.clone(), spec.sizes.iter().copied().max().unwrap_or(0), spec.seed)
    }

    fn base(&self, d: &DatasetSpec, resolution: usize) -> Result<Arc<Dataset>> {
        let key = (d.name.clone(), resolution);
        if let Some(b) = self.bases.borrow().get(&key) {
            return Ok(b);
        }
        let mut base = match &d.path {
            Some(dir) => {
                let ds = ingest_images(dir, resolution, d.channels == 1)?;
                if ds.n_classes != d.n_classes {
                    return Err(Error::config(
                        "datasets.n_classes",
                        format!("`{}` declares {} classes, {} found on disk", d.name, d.n_classes, ds.n_classes),
                    ));
                }
                ds
            }
            None => generate_synthetic(&SyntheticSpec {
                n_images: self.base_size.div_ceil(d.n_classes).max(1) * d.n_classes,
                resolution,
                channels: d.channels,
                n_classes: d.n_classes,
                sparsity: d.sparsity,
                class_separation: d.class_separation,
                seed: d.generation_seed(),
            })?,
        };
        base.name = d.name.clone();
        let base = Arc::new(base);
        self.bases.borrow_mut().put(key, base.clone());
        Ok(base)
    }
}

impl DatasetProvider for SpecProvider {
    fn variant(&self, name: &str, n_images: usize, resolution: usize) -> Result<Arc<Dataset>> {
        let key = (name.to_string(), n_images, resolution);
        if let Some(v) = self.variants.borrow().get(&key) {
            return Ok(v);
        }
        let d = self
            .specs
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("no dataset named `{name}`")))?;
        let base = self.base(d, resolution)?;
        let v = standardize(&base, &[n_images], &[resolution], self.seed)?
            .pop()
            .expect("one size, one resolution");
        let v = Arc::new(v);
        self.variants.borrow_mut().put(key, v.clone());
        Ok(v)
    }
}

/// Everything an experiment needs besides its config and meter, including
/// the models trained by recent train phases.
pub struct ModelCache<'a> {
    pub provider: &'a dyn DatasetProvider,
    pub params: ClassifierParams,
    pub train_fraction: f64,
    models: Bounded<ExperimentConfig, (Arc<ClassifierModel>, Arc<LabeledMatrix>)>,
}

impl<'a> ModelCache<'a> {
    pub fn new(provider: &'a dyn DatasetProvider, params: ClassifierParams, train_fraction: f64) -> Self {
        Self {
            provider,
            params,
            train_fraction,
            models: Bounded::new(16),
        }
    }
}

fn fit(config: &ExperimentConfig, train: &LabeledMatrix, params: &ClassifierParams, work: &mut Work) -> Result<ClassifierModel> {
    Ok(match config.algorithm {
        Algorithm::Knn => ClassifierModel::Knn(knn_fit_metered(train, params.k, work)?),
        Algorithm::LogReg => {
            let p = crate::classifiers::LogRegParams {
                seed: config.seed,
                ..params.logreg.clone()
            };
            ClassifierModel::LogReg(logreg_fit_metered(train, &p, config.workers, work)?)
        }
        Algorithm::Svm => ClassifierModel::Svm(svm_fit_metered(train, &params.svm, work)?),
    })
}

fn predict(config: &ExperimentConfig, model: &ClassifierModel, test: &LabeledMatrix, work: &mut Work) -> Result<Vec<usize>> {
    match model {
        ClassifierModel::Knn(m) => knn_predict_metered(m, &test.features, config.workers, work),
        ClassifierModel::LogReg(m) => logreg_predict_metered(m, &test.features, work),
        ClassifierModel::Svm(m) => svm_predict_metered(m, &test.features, work),
    }
}

/// Cores a phase keeps busy: k-NN queries and logistic per-class fits are
/// spread over the workers; everything else runs on one core.
fn active_cores(config: &ExperimentConfig) -> usize {
    match (config.algorithm, config.phase) {
        (Algorithm::Knn, Phase::Test) | (Algorithm::LogReg, Phase::Train) => config.workers,
        _ => 1,
    }
}

/// Runs the phase named by `config` inside one meter session. A test phase
/// reuses the model from the matching train phase, training one outside
/// the meter if none is cached.
pub fn run_experiment(
    config: &ExperimentConfig,
    rep: usize,
    meter: &Meter,
    ctx: &mut ModelCache<'_>,
) -> Result<MeasurementRecord> {
    if config.workers == 0 {
        return Err(Error::config("workers", "must be >= 1"));
    }
    if config.workers > 1 && !config.algorithm.supports_workers() {
        return Err(Error::config(
            "workers",
            format!("{} runs single-core; got workers={}", config.algorithm, config.workers),
        ));
    }
    if let Some(cores) = meter.max_cores() {
        if config.workers > cores {
            return Err(Error::config(
                "workers",
                format!("{} workers exceed the {cores} cores of `{}`", config.workers, config.device),
            ));
        }
    }
    let train_key = ExperimentConfig {
        phase: Phase::Train,
        ..config.clone()
    };
    let prepare = |ctx: &ModelCache<'_>| -> Result<(LabeledMatrix, LabeledMatrix)> {
        let data = ctx.provider.variant(&config.dataset, config.n_images, config.resolution)?;
        let (c, n) = (data.channels(), data.n_classes);
        if c != config.channels || n != config.n_classes {
            return Err(Error::InvalidInput(format!(
                "dataset `{}` has {c} channel(s) and {n} classes; config says {} and {}",
                config.dataset, config.channels, config.n_classes
            )));
        }
        let (train, test) = split(&data, ctx.train_fraction, config.seed)?;
        Ok((train.to_matrix(), test.to_matrix()))
    };

    let (measurement, acc) = match config.phase {
        Phase::Train => {
            let (train, test) = prepare(ctx)?;
            let params = &ctx.params;
            let (m, model) = meter.session(active_cores(config), |w| fit(config, &train, params, w))?;
            ctx.models.put(train_key, (Arc::new(model?), Arc::new(test)));
            (m, None)
        }
        Phase::Test => {
            let (model, test) = match ctx.models.get(&train_key) {
                Some(hit) => hit,
                None => {
                    let (train, test) = prepare(ctx)?;
                    let model = fit(config, &train, &ctx.params, &mut Work::default())?;
                    let entry = (Arc::new(model), Arc::new(test));
                    ctx.models.put(train_key, entry.clone());
                    entry
                }
            };
            let (m, predicted) = meter.session(active_cores(config), |w| predict(config, &model, &test, w))?;
            (m, Some(accuracy(&predicted?, &test.labels)?))
        }
    };
    Ok(MeasurementRecord {
        config: config.clone(),
        rep,
        duration_s: measurement.duration_s,
        energy_j: measurement.energy_j,
        accuracy: acc,
        status: RunStatus::Ok,
    })
}

/// Meter for runs on `device`.
pub fn build_meter(spec: &MeterSpec, device: &str) -> Result<Meter> {
    match spec {
        MeterSpec::Model { clock, profiles } => {
            let profile = match profiles.get(device) {
                Some(path) => DeviceProfile::load(path)?,
                None => DeviceProfile::builtin(device).ok_or_else(|| {
                    Error::config("devices", format!("`{device}` is neither built in nor given a profile file"))
                })?,
            };
            Meter::model(profile, *clock)
        }
        MeterSpec::Trace { path } => Meter::trace(PowerTrace::load_csv(path)?),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub config: ExperimentConfig,
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Previously persisted records followed by this run's, in file order.
    pub records: Vec<MeasurementRecord>,
    pub executed: usize,
    pub skipped: usize,
    pub failures: Vec<RunFailure>,
}

/// Runs every (configuration, repetition) of `spec` sequentially, appending
/// each record to `spec.output` as it completes. Repetition `r` runs with
/// seed `spec.seed + r`. With `resume`, rows already in the output file are
/// kept and their runs skipped. A failing run is recorded as `failed` and
/// the sweep continues.
pub fn run_matrix(spec: &MatrixSpec, provider: &dyn DatasetProvider, resume: bool) -> Result<RunSummary> {
    let configs = enumerate_matrix(spec)?;
    let (mut records, mut writer) = if resume && spec.output.exists() {
        (load_records(&spec.output)?, RecordWriter::append(&spec.output)?)
    } else {
        (Vec::new(), RecordWriter::create(&spec.output)?)
    };
    let done: HashSet<(ExperimentConfig, usize)> = records.iter().map(MeasurementRecord::key).collect();

    let mut meters: HashMap<String, Meter> = HashMap::new();
    let shared_trace = match &spec.meter {
        MeterSpec::Trace { .. } => Some(build_meter(&spec.meter, "")?),
        MeterSpec::Model { .. } => None,
    };
    let mut ctx = ModelCache::new(provider, spec.classifiers.clone(), spec.train_fraction);
    let (mut executed, mut skipped, mut failures) = (0, 0, Vec::new());
    let total = spec.n_runs();

    for base in &configs {
        for rep in 0..spec.repetitions {
            let config = ExperimentConfig {
                seed: base.seed.wrapping_add(rep as u64),
                ..base.clone()
            };
            if done.contains(&(config.clone(), rep)) {
                skipped += 1;
                continue;
            }
            let meter = match &shared_trace {
                Some(m) => Ok(m),
                None => {
                    if !meters.contains_key(&config.device) {
                        let m = build_meter(&spec.meter, &config.device)?;
                        meters.insert(config.device.clone(), m);
                    }
                    Ok::<_, Error>(&meters[&config.device])
                }
            }?;
            let record = match run_experiment(&config, rep, meter, &mut ctx) {
                Ok(r) => r,
                Err(e) => {
                    warn!("{} {} {} n={} r={} rep={rep} failed: {e}", config.algorithm, config.phase, config.dataset, config.n_images, config.resolution);
                    failures.push(RunFailure {
                        config: config.clone(),
                        rep,
                        message: e.to_string(),
                    });
                    MeasurementRecord::failed(config, rep)
                }
            };
            writer.write(&record)?;
            executed += 1;
            info!(
                "[{}/{total}] {} {} {} n={} r={} rep={rep}: {:.4} J",
                executed + skipped,
                record.config.algorithm,
                record.config.phase,
                record.config.dataset,
                record.config.n_images,
                record.config.resolution,
                record.energy_j
            );
            records.push(record);
        }
    }
    Ok(RunSummary {
        records,
        executed,
        skipped,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metering::ModelClock;

    fn tiny_spec(dir: &std::path::Path) -> MatrixSpec {
        MatrixSpec {
            algorithms: vec![Algorithm::Knn, Algorithm::LogReg],
            datasets: vec![DatasetSpec::synthetic("tiny", 2, 1, false, 0.3)],
            sizes: vec![40, 60],
            resolutions: vec![6],
            repetitions: 2,
            output: dir.join("records.csv"),
            classifiers: ClassifierParams {
                logreg: crate::classifiers::LogRegParams {
                    iterations: 20,
                    ..Default::default()
                },
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn config(algorithm: Algorithm, phase: Phase, workers: usize) -> ExperimentConfig {
        ExperimentConfig {
            algorithm,
            phase,
            dataset: "tiny".into(),
            n_images: 60,
            resolution: 6,
            channels: 1,
            n_classes: 2,
            color: false,
            device: "rpi3".into(),
            workers,
            seed: 3,
        }
    }

    fn meter() -> Meter {
        Meter::model(DeviceProfile::rpi3(), ModelClock::Work { ops_per_second: 1e6 }).unwrap()
    }

    #[test]
    fn nested_sizes_from_provider() {
        let p = SpecProvider::new(vec![DatasetSpec::synthetic("tiny", 2, 1, false, 0.0)], 60, 0);
        let small = p.variant("tiny", 40, 6).unwrap();
        let big = p.variant("tiny", 60, 6).unwrap();
        assert_eq!(small.len(), 40);
        assert_eq!(small.class_counts(), vec![20, 20]);
        for img in &small.images {
            assert!(big.images.contains(img));
        }
        assert!(p.variant("nope", 40, 6).is_err());
        assert!(p.variant("tiny", 100, 6).is_err());
    }

    #[test]
    fn phases_and_accuracy() {
        let p = SpecProvider::new(vec![DatasetSpec::synthetic("tiny", 2, 1, false, 0.0)], 60, 0);
        let mut ctx = ModelCache::new(&p, ClassifierParams::default(), 0.8);
        let m = meter();
        let train = run_experiment(&config(Algorithm::Knn, Phase::Train, 1), 0, &m, &mut ctx).unwrap();
        let test = run_experiment(&config(Algorithm::Knn, Phase::Test, 1), 0, &m, &mut ctx).unwrap();
        assert!(train.accuracy.is_none());
        let acc = test.accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert!(train.duration_s > 0.0 && train.duration_s < test.duration_s);
        // identical energy on rerun, even with a fresh cache
        let mut fresh = ModelCache::new(&p, ClassifierParams::default(), 0.8);
        let again = run_experiment(&config(Algorithm::Knn, Phase::Test, 1), 0, &m, &mut fresh).unwrap();
        assert_eq!(again.energy_j, test.energy_j);
        assert_eq!(again.accuracy, test.accuracy);
    }

    #[test]
    fn worker_rules() {
        let p = SpecProvider::new(vec![DatasetSpec::synthetic("tiny", 2, 1, false, 0.0)], 60, 0);
        let mut ctx = ModelCache::new(&p, ClassifierParams::default(), 0.8);
        let m = meter();
        let e = run_experiment(&config(Algorithm::Svm, Phase::Train, 2), 0, &m, &mut ctx).unwrap_err();
        assert!(matches!(e, Error::Config { field, .. } if field == "workers"));
        assert!(run_experiment(&config(Algorithm::Knn, Phase::Test, 5), 0, &m, &mut ctx).is_err());
        let one = run_experiment(&config(Algorithm::Knn, Phase::Test, 1), 0, &m, &mut ctx).unwrap();
        let four = run_experiment(&config(Algorithm::Knn, Phase::Test, 4), 0, &m, &mut ctx).unwrap();
        assert_eq!(one.accuracy, four.accuracy);
        assert!(four.energy_j < one.energy_j);
        assert!(four.duration_s < one.duration_s);
    }

    #[test]
    fn matrix_run_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec(dir.path());
        let provider = SpecProvider::from_spec(&spec);
        let s = run_matrix(&spec, &provider, false).unwrap();
        assert_eq!(s.executed, spec.n_runs());
        assert!(s.failures.is_empty());
        assert_eq!(load_records(&spec.output).unwrap(), s.records);
        for r in &s.records {
            assert_eq!(r.accuracy.is_some(), r.config.phase == Phase::Test);
        }
        let again = run_matrix(&spec, &provider, true).unwrap();
        assert_eq!(again.executed, 0);
        assert_eq!(again.skipped, spec.n_runs());

        // drop the last three rows and resume
        let text = std::fs::read_to_string(&spec.output).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        std::fs::write(&spec.output, lines[..lines.len() - 3].join("\n") + "\n").unwrap();
        let resumed = run_matrix(&spec, &provider, true).unwrap();
        assert_eq!(resumed.executed, 3);
        assert_eq!(resumed.records, s.records);
    }

    #[test]
    fn failures_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MatrixSpec {
            algorithms: vec![Algorithm::Svm, Algorithm::Knn],
            workers: vec![2],
            phases: vec![Phase::Train],
            sizes: vec![40],
            repetitions: 1,
            ..tiny_spec(dir.path())
        };
        let s = run_matrix(&spec, &SpecProvider::from_spec(&spec), false).unwrap();
        assert_eq!(s.records.len(), 2);
        assert_eq!(s.failures.len(), 1);
        assert_eq!(s.records[0].status, RunStatus::Failed);
        assert_eq!(s.records[1].status, RunStatus::Ok);
    }
}
