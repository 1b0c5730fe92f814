use serde::{Deserialize, Serialize};

use super::{argmax_votes, check_width, parallel_map, row_sq_norm};
use crate::datasets::{FeatureMatrix, LabeledMatrix};
use crate::error::{Error, Result};
use crate::metering::Work;

/// Neighbor count used when a configuration does not override it.
pub const DEFAULT_K: usize = 5;

/// Brute-force k-nearest-neighbor classifier. Fitting stores a copy of the
/// training matrix and nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    train: FeatureMatrix,
    labels: Vec<usize>,
    n_classes: usize,
    pub k: usize,
}

impl KnnModel {
    pub fn n_train(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.train.cols()
    }
}

pub fn knn_fit(train: &LabeledMatrix, k: usize) -> Result<KnnModel> {
    knn_fit_metered(train, k, &mut Work::default())
}

pub fn knn_fit_metered(train: &LabeledMatrix, k: usize, work: &mut Work) -> Result<KnnModel> {
    if train.is_empty() {
        return Err(Error::InvalidInput("k-NN needs a nonempty training set".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::config("k", format!("{k} outside 1..={}", train.len())));
    }
    let model = KnnModel {
        train: train.features.clone(),
        labels: train.labels.clone(),
        n_classes: train.n_classes,
        k,
    };
    work.add(model.train.stored_entries() as u64 + model.labels.len() as u64);
    Ok(model)
}

pub fn knn_predict(model: &KnnModel, queries: &FeatureMatrix, workers: usize) -> Result<Vec<usize>> {
    knn_predict_metered(model, queries, workers, &mut Work::default())
}

/// Labels each query with the majority class among its `k` nearest
/// training points (squared Euclidean). Distance ties go to the lower
/// training index, vote ties to the lower class. Queries are split into
/// contiguous blocks, one per worker; the output does not depend on
/// `workers`.
pub fn knn_predict_metered(
    model: &KnnModel,
    queries: &FeatureMatrix,
    workers: usize,
    work: &mut Work,
) -> Result<Vec<usize>> {
    if workers == 0 {
        return Err(Error::config("workers", "must be >= 1"));
    }
    check_width(model.n_features(), queries)?;
    let train_norms: Vec<f64> = match &model.train {
        FeatureMatrix::Sparse(_) => (0..model.n_train()).map(|i| row_sq_norm(&model.train, i)).collect(),
        FeatureMatrix::Dense(_) => Vec::new(),
    };
    let (labels, per_worker) = parallel_map(queries.rows(), workers, |q| {
        let query = queries.dense_row(q);
        classify(model, &query, &train_norms)
    });
    work.add_parallel(&per_worker);
    Ok(labels)
}

fn classify(model: &KnnModel, query: &[f64], train_norms: &[f64]) -> (usize, u64) {
    let n = model.n_train();
    let mut ops = 0u64;
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    match &model.train {
        FeatureMatrix::Dense(m) => {
            for i in 0..n {
                let d = m
                    .row(i)
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                dist.push((d, i));
                ops += m.cols as u64;
            }
        }
        FeatureMatrix::Sparse(m) => {
            let q_norm: f64 = query.iter().map(|x| x * x).sum();
            ops += query.len() as u64;
            for i in 0..n {
                let row = m.row(i);
                // |q - x|^2 = |q|^2 + |x|^2 - 2 q.x over the stored nonzeros of x
                let cross: f64 = row.indices.iter().zip(row.values).map(|(&j, &x)| x * query[j as usize]).sum();
                dist.push(((q_norm + train_norms[i] - 2.0 * cross).max(0.0), i));
                ops += row.nnz() as u64 + 1;
            }
        }
    }
    let k = model.k;
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < n {
        dist.select_nth_unstable_by(k - 1, by_dist);
    }
    ops += n as u64;
    let mut votes = vec![0usize; model.n_classes];
    for &(_, i) in &dist[..k] {
        votes[model.labels[i]] += 1;
    }
    (argmax_votes(&votes), ops)
}
