use serde::{Deserialize, Serialize};

use super::{check_width, parallel_map, row_axpy, row_dot};
use crate::datasets::{FeatureMatrix, LabeledMatrix};
use crate::error::{Error, Result};
use crate::metering::Work;

/// Full-batch gradient descent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
    /// Carried for reproducibility bookkeeping; initialization is all-zero.
    pub seed: u64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 500,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// One-vs-all logistic regression. Two-class problems keep a single
/// classifier scoring class 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub n_classes: usize,
    pub params: LogRegParams,
}

impl LogRegModel {
    pub fn n_classifiers(&self) -> usize {
        self.weights.len()
    }

    /// Raw linear score of every classifier for one dense input.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn logreg_fit(train: &LabeledMatrix, params: &LogRegParams, workers: usize) -> Result<LogRegModel> {
    logreg_fit_metered(train, params, workers, &mut Work::default())
}

/// Trains one binary classifier per class (a single one for two classes)
/// by full-batch gradient descent on the L2-regularized mean log-loss.
/// Per-class trainings are independent and spread over `workers`.
pub fn logreg_fit_metered(
    train: &LabeledMatrix,
    params: &LogRegParams,
    workers: usize,
    work: &mut Work,
) -> Result<LogRegModel> {
    if train.n_classes < 2 {
        return Err(Error::config("n_classes", format!("logistic regression needs >= 2, got {}", train.n_classes)));
    }
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if workers == 0 {
        return Err(Error::config("workers", "must be >= 1"));
    }
    if !(params.learning_rate > 0.0) {
        return Err(Error::config("learning_rate", "must be > 0"));
    }
    let n_models = if train.n_classes == 2 { 1 } else { train.n_classes };
    let (fits, per_worker) = parallel_map(n_models, workers, |c| {
        let positive = if n_models == 1 { 1 } else { c };
        let targets: Vec<f64> = train.labels.iter().map(|&l| f64::from(u8::from(l == positive))).collect();
        let (res, ops) = fit_binary(&train.features, &targets, params);
        (res.map_err(|loss| (c, loss)), ops)
    });
    work.add_parallel(&per_worker);

    let mut weights = Vec::with_capacity(n_models);
    let mut biases = Vec::with_capacity(n_models);
    for f in fits {
        match f {
            Ok((w, b)) => {
                weights.push(w);
                biases.push(b);
            }
            Err((class, loss)) => {
                return Err(Error::Numerical(format!(
                    "logistic loss for class {class} became {loss}; lower the learning rate"
                )))
            }
        }
    }
    Ok(LogRegModel {
        weights,
        biases,
        n_classes: train.n_classes,
        params: params.clone(),
    })
}

type BinaryFit = std::result::Result<(Vec<f64>, f64), f64>;

fn fit_binary(x: &FeatureMatrix, y: &[f64], params: &LogRegParams) -> (BinaryFit, u64) {
    let n = y.len();
    let d = x.cols();
    let inv_n = 1.0 / n as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad = vec![0.0; d];
    let mut ops = 0u64;
    for _ in 0..params.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for i in 0..n {
            let (dot, o) = row_dot(x, i, &w);
            let z = dot + b;
            // y log s(z) + (1-y) log(1-s(z)) == -(softplus(z) - y z)
            loss += softplus(z) - y[i] * z;
            let r = sigmoid(z) - y[i];
            grad_b += r;
            ops += o + row_axpy(x, i, r * inv_n, &mut grad);
        }
        let reg: f64 = w.iter().map(|v| v * v).sum();
        loss = loss * inv_n + 0.5 * params.l2 * reg;
        if !loss.is_finite() {
            return (Err(loss), ops);
        }
        for (wj, gj) in w.iter_mut().zip(&grad) {
            *wj -= params.learning_rate * (gj + params.l2 * *wj);
        }
        b -= params.learning_rate * grad_b * inv_n;
        ops += 2 * d as u64;
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return (Err(f64::NAN), ops);
    }
    (Ok((w, b)), ops)
}

pub fn logreg_predict(model: &LogRegModel, queries: &FeatureMatrix) -> Result<Vec<usize>> {
    logreg_predict_metered(model, queries, &mut Work::default())
}

/// Argmax of the per-class scores; with a single classifier, class 1 when
/// `sigmoid(score) >= 0.5`.
pub fn logreg_predict_metered(model: &LogRegModel, queries: &FeatureMatrix, work: &mut Work) -> Result<Vec<usize>> {
    let d = model.weights.first().map_or(0, Vec::len);
    check_width(d, queries)?;
    let mut out = Vec::with_capacity(queries.rows());
    for q in 0..queries.rows() {
        let mut best = (f64::NEG_INFINITY, 0usize);
        let mut scores = Vec::with_capacity(model.weights.len());
        for (w, b) in model.weights.iter().zip(&model.biases) {
            let (dot, ops) = row_dot(queries, q, w);
            work.add(ops + 1);
            scores.push(dot + b);
        }
        let label = if scores.len() == 1 {
            usize::from(sigmoid(scores[0]) >= 0.5)
        } else {
            for (c, &s) in scores.iter().enumerate() {
                if s > best.0 {
                    best = (s, c);
                }
            }
            best.1
        };
        out.push(label);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::accuracy;
    use crate::classifiers::testutil::blobs;
    use crate::datasets::DenseMatrix;

    fn line_set() -> LabeledMatrix {
        let xs = [-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0];
        LabeledMatrix {
            features: FeatureMatrix::Dense(DenseMatrix { data: xs.to_vec(), rows: 8, cols: 1 }),
            labels: vec![0, 0, 0, 0, 1, 1, 1, 1],
            n_classes: 2,
        }
    }

    #[test]
    fn boundary_scores_half() {
        assert_eq!(sigmoid(0.0), 0.5);
        let model = LogRegModel {
            weights: vec![vec![2.0, -1.0]],
            biases: vec![0.0],
            n_classes: 2,
            params: LogRegParams::default(),
        };
        // on the boundary w.x + b = 0
        assert_eq!(sigmoid(model.scores(&[1.0, 2.0])[0]), 0.5);
    }

    #[test]
    fn separable_line_is_learned() {
        let data = line_set();
        // the threshold x = 0 separates the classes exactly
        let model = logreg_fit(&data, &LogRegParams::default(), 1).unwrap();
        assert_eq!(model.n_classifiers(), 1);
        let pred = logreg_predict(&model, &data.features).unwrap();
        assert_eq!(accuracy(&pred, &data.labels).unwrap(), 1.0);
        assert!(model.weights[0][0] > 0.0);
    }

    #[test]
    fn one_classifier_per_class() {
        let data = blobs(10, 10, 3, 2.0, 1);
        let model = logreg_fit(&data, &LogRegParams { iterations: 20, ..Default::default() }, 2).unwrap();
        assert_eq!(model.n_classifiers(), 10);
        let three = blobs(10, 3, 3, 2.0, 1);
        let model = logreg_fit(&three, &LogRegParams { iterations: 20, ..Default::default() }, 1).unwrap();
        assert_eq!(model.n_classifiers(), 3);
    }

    #[test]
    fn workers_are_bit_identical() {
        let data = blobs(15, 4, 6, 1.0, 5);
        let p = LogRegParams { iterations: 50, ..Default::default() };
        let one = logreg_fit(&data, &p, 1).unwrap();
        for w in [2, 4] {
            let m = logreg_fit(&data, &p, w).unwrap();
            assert_eq!(m, one);
            assert_eq!(
                logreg_predict(&m, &data.features).unwrap(),
                logreg_predict(&one, &data.features).unwrap()
            );
        }
    }

    #[test]
    fn blowup_names_class() {
        let mut data = blobs(5, 3, 2, 1.0, 0);
        if let FeatureMatrix::Dense(m) = &mut data.features {
            m.data.iter_mut().for_each(|v| *v *= 1e300);
        }
        let err = logreg_fit(&data, &LogRegParams { learning_rate: 1e10, iterations: 5, ..Default::default() }, 1)
            .unwrap_err();
        assert!(err.to_string().contains("class 0"), "{err}");
    }

    #[test]
    fn needs_two_classes() {
        let mut data = line_set();
        data.n_classes = 1;
        data.labels = vec![0; 8];
        assert!(logreg_fit(&data, &LogRegParams::default(), 1).is_err());
    }
}
