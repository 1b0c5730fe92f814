//! Grouped prediction reports and plot-data series.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Algorithm, ExperimentConfig, MeasurementRecord, Phase, RunStatus};
use crate::metrics::{self, Metrics};

/// A predicted energy for one persisted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub config: ExperimentConfig,
    pub rep: usize,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// `None` in the totals row.
    pub algorithm: Option<Algorithm>,
    pub phase: Option<Phase>,
    pub dataset: Option<String>,
    pub n: usize,
    pub ss_res: f64,
    pub rmse: f64,
    pub range: f64,
    pub nrmse: Option<f64>,
    pub r_squared: Option<f64>,
}

impl ReportRow {
    fn new(algorithm: Option<Algorithm>, phase: Option<Phase>, dataset: Option<String>, pred: &[f64], truth: &[f64]) -> Result<Self> {
        let m = Metrics::compute(pred, truth)?;
        Ok(Self {
            algorithm,
            phase,
            dataset,
            n: truth.len(),
            ss_res: metrics::ss_res(pred, truth),
            rmse: m.rmse,
            range: m.range,
            nrmse: m.nrmse,
            r_squared: m.r_squared,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// One row per (algorithm, phase, dataset), sorted.
    pub rows: Vec<ReportRow>,
    pub total: ReportRow,
}

/// Joins predictions to successful records by (config, rep) and summarizes
/// them per (algorithm, phase, dataset) plus an overall row.
pub fn grouped_report(records: &[MeasurementRecord], predictions: &[Prediction]) -> Result<Report> {
    let truth: HashMap<(&ExperimentConfig, usize), f64> = records
        .iter()
        .filter(|r| r.status == RunStatus::Ok)
        .map(|r| ((&r.config, r.rep), r.energy_j))
        .collect();
    type Group = (Vec<f64>, Vec<f64>);
    let mut groups: BTreeMap<(Algorithm, Phase, String), Group> = BTreeMap::new();
    let (mut all_p, mut all_t) = (Vec::new(), Vec::new());
    for p in predictions {
        let &t = truth.get(&(&p.config, p.rep)).ok_or_else(|| {
            Error::InvalidInput(format!(
                "prediction for {} {} {} n={} r={} rep={} has no matching record",
                p.config.algorithm, p.config.phase, p.config.dataset, p.config.n_images, p.config.resolution, p.rep
            ))
        })?;
        let g = groups
            .entry((p.config.algorithm, p.config.phase, p.config.dataset.clone()))
            .or_default();
        g.0.push(p.energy_j);
        g.1.push(t);
        all_p.push(p.energy_j);
        all_t.push(t);
    }
    if all_t.is_empty() {
        return Err(Error::InvalidInput("no predictions to report".into()));
    }
    let rows = groups
        .into_iter()
        .map(|((a, ph, d), (p, t))| ReportRow::new(Some(a), Some(ph), Some(d), &p, &t))
        .collect::<Result<_>>()?;
    Ok(Report {
        rows,
        total: ReportRow::new(None, None, None, &all_p, &all_t)?,
    })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// Writes the rows and the totals row (`all` in the key columns) as CSV.
pub fn write_report_csv(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "phase", "dataset", "n", "rmse", "range", "nrmse", "r_squared"])?;
    for r in report.rows.iter().chain([&report.total]) {
        let key = |s: String| if s.is_empty() { "all".to_string() } else { s };
        w.write_record([
            key(opt(&r.algorithm)),
            key(opt(&r.phase)),
            key(opt(&r.dataset)),
            r.n.to_string(),
            r.rmse.to_string(),
            r.range.to_string(),
            opt(&r.nrmse),
            opt(&r.r_squared),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// The varied axis of a plot series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotAxis {
    /// Energy against `n_images`, one series per resolution.
    Size,
    /// Energy against pixel count, one series per size.
    Resolution,
}

/// Mean energy over repetitions (and devices/workers) at one x value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub algorithm: Algorithm,
    pub phase: Phase,
    pub dataset: String,
    /// Resolution for size series, size for resolution series.
    pub fixed: usize,
    /// `n_images`, or pixels per image (`resolution^2 * channels`).
    pub x: usize,
    pub mean_energy_j: f64,
    pub std_energy_j: f64,
    pub n: usize,
}

pub fn plot_series(records: &[MeasurementRecord], axis: PlotAxis) -> Vec<SeriesPoint> {
    let mut groups: BTreeMap<(Algorithm, Phase, String, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == RunStatus::Ok) {
        let c = &r.config;
        let (fixed, x) = match axis {
            PlotAxis::Size => (c.resolution, c.n_images),
            PlotAxis::Resolution => (c.n_images, c.n_pixels()),
        };
        groups
            .entry((c.algorithm, c.phase, c.dataset.clone(), fixed, x))
            .or_default()
            .push(r.energy_j);
    }
    groups
        .into_iter()
        .map(|((algorithm, phase, dataset, fixed, x), e)| {
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            let var = e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            SeriesPoint {
                algorithm,
                phase,
                dataset,
                fixed,
                x,
                mean_energy_j: mean,
                std_energy_j: var.sqrt(),
                n: e.len(),
            }
        })
        .collect()
}

/// Writes `energy_vs_size.csv` and `energy_vs_resolution.csv` into `dir`;
/// returns their paths.
pub fn write_plot_data(records: &[MeasurementRecord], dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for (axis, file, fixed, x) in [
        (PlotAxis::Size, "energy_vs_size.csv", "resolution", "n_images"),
        (PlotAxis::Resolution, "energy_vs_resolution.csv", "n_images", "pixels"),
    ] {
        let path = dir.join(file);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["algorithm", "phase", "dataset", fixed, x, "mean_energy_j", "std_energy_j", "n"])?;
        for p in plot_series(records, axis) {
            w.write_record([
                p.algorithm.to_string(),
                p.phase.to_string(),
                p.dataset,
                p.fixed.to_string(),
                p.x.to_string(),
                p.mean_energy_j.to_string(),
                p.std_energy_j.to_string(),
                p.n.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(algorithm: Algorithm, phase: Phase, n_images: usize, rep: usize, energy_j: f64) -> MeasurementRecord {
        MeasurementRecord {
            config: ExperimentConfig {
                algorithm,
                phase,
                dataset: "d".into(),
                n_images,
                resolution: 17,
                channels: 1,
                n_classes: 10,
                color: false,
                device: "rpi3".into(),
                workers: 1,
                seed: rep as u64,
            },
            rep,
            duration_s: 1.0,
            energy_j,
            accuracy: None,
            status: RunStatus::Ok,
        }
    }

    fn predict(r: &MeasurementRecord, energy_j: f64) -> Prediction {
        Prediction {
            config: r.config.clone(),
            rep: r.rep,
            energy_j,
        }
    }

    #[test]
    fn hand_computed_group() {
        // truth 1,2,3,6; predictions 2,2,2,5
        let recs: Vec<_> = [1.0, 2.0, 3.0, 6.0]
            .iter()
            .enumerate()
            .map(|(i, &e)| record(Algorithm::Knn, Phase::Test, 300, i, e))
            .collect();
        let preds: Vec<_> = recs.iter().zip([2.0, 2.0, 2.0, 5.0]).map(|(r, p)| predict(r, p)).collect();
        let rep = grouped_report(&recs, &preds).unwrap();
        assert_eq!(rep.rows.len(), 1);
        let row = &rep.rows[0];
        // ss_res = 1+0+1+1 = 3, mean truth 3, ss_tot = 4+1+0+9 = 14
        assert_eq!(row.ss_res, 3.0);
        assert!((row.rmse - 0.75f64.sqrt()).abs() < 1e-15);
        assert_eq!(row.range, 5.0);
        assert!((row.nrmse.unwrap() - 0.75f64.sqrt() / 5.0).abs() < 1e-15);
        assert!((row.r_squared.unwrap() - (1.0 - 3.0 / 14.0)).abs() < 1e-15);
        assert_eq!(rep.total.rmse, row.rmse);
    }

    #[test]
    fn six_groups_recompose() {
        let mut recs = Vec::new();
        for a in Algorithm::ALL {
            for p in Phase::ALL {
                for (i, e) in [1.0, 2.5, 4.0].into_iter().enumerate() {
                    recs.push(record(a, p, 300 * (i + 1), 0, e + a as usize as f64));
                }
            }
        }
        let preds: Vec<_> = recs.iter().enumerate().map(|(i, r)| predict(r, r.energy_j + (i % 3) as f64 * 0.1)).collect();
        let rep = grouped_report(&recs, &preds).unwrap();
        assert_eq!(rep.rows.len(), 6);
        let pooled: f64 = rep.rows.iter().map(|r| r.ss_res).sum();
        assert!((pooled - rep.total.ss_res).abs() < 1e-12);
        assert_eq!(rep.total.n, 18);
    }

    #[test]
    fn unjoined_prediction_fails() {
        let recs = vec![record(Algorithm::Svm, Phase::Train, 300, 0, 1.0)];
        let mut p = predict(&recs[0], 1.0);
        p.rep = 4;
        assert!(grouped_report(&recs, &[p]).is_err());
    }

    #[test]
    fn series_average_repetitions() {
        let recs = vec![
            record(Algorithm::Knn, Phase::Test, 300, 0, 1.0),
            record(Algorithm::Knn, Phase::Test, 300, 1, 3.0),
            record(Algorithm::Knn, Phase::Test, 600, 0, 5.0),
        ];
        let s = plot_series(&recs, PlotAxis::Size);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].x, s[0].mean_energy_j, s[0].std_energy_j, s[0].n), (300, 2.0, 1.0, 2));
        let r = plot_series(&recs, PlotAxis::Resolution);
        assert_eq!(r[0].x, 289);
        let dir = tempfile::tempdir().unwrap();
        let files = write_plot_data(&recs, dir.path()).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("algorithm,phase,dataset,resolution,n_images,"));
        assert_eq!(text.lines().count(), 3);
    }
}
