//! From-scratch k-NN, one-vs-all logistic regression and one-vs-one RBF
//! SVM. Every fit/predict has a `_metered` form that tallies the work it
//! performs into a [`Work`] counter for the analytical meter.

mod knn;
mod logreg;
mod svm;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::{sparse_dot, FeatureMatrix};
use crate::error::{Error, Result};

pub use knn::{knn_fit, knn_fit_metered, knn_predict, knn_predict_metered, KnnModel, DEFAULT_K};
pub use logreg::{logreg_fit, logreg_fit_metered, logreg_predict, logreg_predict_metered, LogRegModel, LogRegParams};
pub use svm::{svm_fit, svm_fit_metered, svm_predict, svm_predict_metered, PairClassifier, SvmModel, SvmParams};

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("accuracy of empty label vectors".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Index of the largest count; ties go to the lowest index.
pub(crate) fn argmax_votes(votes: &[usize]) -> usize {
    let mut best = 0;
    for (i, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = i;
        }
    }
    best
}

/// `row_i . w` and the multiply-adds it cost.
pub(crate) fn row_dot(m: &FeatureMatrix, i: usize, w: &[f64]) -> (f64, u64) {
    match m {
        FeatureMatrix::Dense(d) => {
            let r = d.row(i);
            (r.iter().zip(w).map(|(a, b)| a * b).sum(), r.len() as u64)
        }
        FeatureMatrix::Sparse(s) => {
            let (v, ops) = sparse_dot(s.row(i), w).expect("row width checked by caller");
            (v, ops as u64)
        }
    }
}

/// `g += alpha * row_i`, returning the multiply-adds.
pub(crate) fn row_axpy(m: &FeatureMatrix, i: usize, alpha: f64, g: &mut [f64]) -> u64 {
    match m {
        FeatureMatrix::Dense(d) => {
            let r = d.row(i);
            for (gj, x) in g.iter_mut().zip(r) {
                *gj += alpha * x;
            }
            r.len() as u64
        }
        FeatureMatrix::Sparse(s) => {
            let r = s.row(i);
            for (&j, &x) in r.indices.iter().zip(r.values) {
                g[j as usize] += alpha * x;
            }
            r.nnz() as u64
        }
    }
}

pub(crate) fn row_sq_norm(m: &FeatureMatrix, i: usize) -> f64 {
    match m {
        FeatureMatrix::Dense(d) => d.row(i).iter().map(|x| x * x).sum(),
        FeatureMatrix::Sparse(s) => s.row(i).values.iter().map(|x| x * x).sum(),
    }
}

pub(crate) fn check_width(expected: usize, queries: &FeatureMatrix) -> Result<()> {
    if queries.cols() != expected {
        return Err(Error::Dimension {
            expected,
            actual: queries.cols(),
        });
    }
    Ok(())
}

/// Splits `0..n` into at most `workers` contiguous ranges of near-equal size.
pub(crate) fn partition(n: usize, workers: usize) -> Vec<std::ops::Range<usize>> {
    let workers = workers.max(1).min(n.max(1));
    let base = n / workers;
    let extra = n % workers;
    let mut out = Vec::with_capacity(workers);
    let mut start = 0;
    for w in 0..workers {
        let len = base + usize::from(w < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Fits `f` over `0..n` on up to `workers` scoped threads, returning the
/// per-index results in order and the work per worker.
pub(crate) fn parallel_map<T: Send>(
    n: usize,
    workers: usize,
    f: impl Fn(usize) -> (T, u64) + Sync,
) -> (Vec<T>, Vec<u64>) {
    let ranges = partition(n, workers);
    let f = &f;
    let chunks: Vec<(Vec<T>, u64)> = if ranges.len() <= 1 {
        ranges
            .into_iter()
            .map(|r| {
                let mut ops = 0;
                let v = r.map(|i| {
                    let (t, o) = f(i);
                    ops += o;
                    t
                });
                (v.collect(), ops)
            })
            .collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .into_iter()
                .map(|r| {
                    scope.spawn(move || {
                        let mut ops = 0;
                        let v: Vec<T> = r
                            .map(|i| {
                                let (t, o) = f(i);
                                ops += o;
                                t
                            })
                            .collect();
                        (v, ops)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    };
    let mut out = Vec::with_capacity(n);
    let mut per_worker = Vec::with_capacity(chunks.len());
    for (v, ops) in chunks {
        out.extend(v);
        per_worker.push(ops);
    }
    (out, per_worker)
}


/// Any fitted classifier, as persisted to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum ClassifierModel {
    Knn(KnnModel),
    LogReg(LogRegModel),
    Svm(SvmModel),
}

const CLASSIFIER_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ClassifierFile {
    format_version: u32,
    model: ClassifierModel,
}

impl ClassifierModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(
            std::io::BufWriter::new(file),
            &ClassifierFile {
                format_version: CLASSIFIER_FORMAT_VERSION,
                model: self.clone(),
            },
        )?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let f: ClassifierFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        if f.format_version != CLASSIFIER_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "classifier file version {} (expected {CLASSIFIER_FORMAT_VERSION})",
                f.format_version
            )));
        }
        Ok(f.model)
    }

    pub fn predict(&self, queries: &FeatureMatrix, workers: usize) -> Result<Vec<usize>> {
        match self {
            ClassifierModel::Knn(m) => knn_predict(m, queries, workers),
            ClassifierModel::LogReg(m) => logreg_predict(m, queries),
            ClassifierModel::Svm(m) => svm_predict(m, queries),
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use crate::datasets::{DenseMatrix, FeatureMatrix, LabeledMatrix};

    /// Gaussian blobs, class `c` centered at `c * spread` on every axis.
    pub fn blobs(n_per_class: usize, n_classes: usize, dim: usize, spread: f64, seed: u64) -> LabeledMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n_per_class * n_classes {
            let c = i % n_classes;
            for _ in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                data.push(c as f64 * spread + z);
            }
            labels.push(c);
        }
        LabeledMatrix {
            features: FeatureMatrix::Dense(DenseMatrix {
                data,
                rows: labels.len(),
                cols: dim,
            }),
            labels,
            n_classes,
        }
    }
}
