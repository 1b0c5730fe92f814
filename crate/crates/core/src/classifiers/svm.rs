//! One-vs-one RBF support vector classification. Each pairwise problem is
//! solved on the dual with SMO, picking the maximal violating pair each
//! step.

use log::warn;
use serde::{Deserialize, Serialize};

use super::{argmax_votes, check_width, row_dot, row_sq_norm};
use crate::datasets::{DenseMatrix, FeatureMatrix, LabeledMatrix};
use crate::error::{Error, Result};
use crate::metering::Work;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Box constraint.
    pub c: f64,
    /// RBF width; `None` selects `1 / (n_features * var(X))`.
    pub gamma: Option<f64>,
    /// KKT violation tolerance.
    pub tol: f64,
    /// SMO step cap per pairwise problem.
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            max_iter: 10_000,
        }
    }
}

/// Binary classifier for `(positive, negative)`; decision
/// `sum_i coef_i K(sv_i, x) - rho`, positive means `positive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairClassifier {
    pub positive: usize,
    pub negative: usize,
    /// Indices into [`SvmModel::support_vectors`].
    pub sv: Vec<usize>,
    /// `y_i * alpha_i` for each support vector.
    pub coef: Vec<f64>,
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub pairs: Vec<PairClassifier>,
    /// Union of all pairwise support vectors, dense.
    pub support_vectors: DenseMatrix,
    pub n_classes: usize,
    pub gamma: f64,
    pub c: f64,
    /// Set when any pairwise solve stopped at the iteration cap.
    pub hit_iteration_cap: bool,
}

impl SvmModel {
    /// Distinct training points that are support vectors of some pair.
    pub fn n_support(&self) -> usize {
        self.support_vectors.rows
    }
}

fn default_gamma(x: &FeatureMatrix) -> f64 {
    let n = (x.rows() * x.cols()) as f64;
    if n == 0.0 {
        return 1.0;
    }
    let (mut sum, mut sq) = (0.0, 0.0);
    for i in 0..x.rows() {
        for v in x.dense_row(i) {
            sum += v;
            sq += v * v;
        }
    }
    let mean = sum / n;
    let var = sq / n - mean * mean;
    if var > 0.0 {
        1.0 / (x.cols() as f64 * var)
    } else {
        1.0
    }
}

pub fn svm_fit(train: &LabeledMatrix, params: &SvmParams) -> Result<SvmModel> {
    svm_fit_metered(train, params, &mut Work::default())
}

pub fn svm_fit_metered(train: &LabeledMatrix, params: &SvmParams, work: &mut Work) -> Result<SvmModel> {
    if train.n_classes < 2 {
        return Err(Error::config("n_classes", format!("SVM needs >= 2, got {}", train.n_classes)));
    }
    if !(params.c > 0.0) {
        return Err(Error::config("c", "must be > 0"));
    }
    let gamma = params.gamma.unwrap_or_else(|| default_gamma(&train.features));
    if !(gamma > 0.0) {
        return Err(Error::config("gamma", "must be > 0"));
    }
    let x = &train.features;
    let norms: Vec<f64> = (0..x.rows()).map(|i| row_sq_norm(x, i)).collect();
    work.add(x.stored_entries() as u64);

    let k = train.n_classes;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in train.labels.iter().enumerate() {
        members[l].push(i);
    }

    let mut raw_pairs = Vec::with_capacity(k * (k - 1) / 2);
    let mut is_sv = vec![false; x.rows()];
    for a in 0..k {
        for b in a + 1..k {
            let idx: Vec<usize> = members[a].iter().chain(&members[b]).copied().collect();
            let y: Vec<f64> = idx.iter().map(|&i| if train.labels[i] == a { 1.0 } else { -1.0 }).collect();
            let (alpha, rho, iterations, converged) = solve_pair(x, &norms, &idx, &y, gamma, params, work);
            if !converged {
                warn!("SVM pair ({a}, {b}) stopped at {iterations} iterations before reaching tolerance");
            }
            let mut sv_global = Vec::new();
            let mut coef = Vec::new();
            let mut alphas = Vec::new();
            for (t, &al) in alpha.iter().enumerate() {
                if al > 0.0 {
                    sv_global.push(idx[t]);
                    coef.push(y[t] * al);
                    alphas.push(al);
                    is_sv[idx[t]] = true;
                }
            }
            raw_pairs.push((a, b, sv_global, coef, alphas, rho, iterations, converged));
        }
    }

    // compact the support vector set, remapping pair indices
    let mut remap = vec![usize::MAX; x.rows()];
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, &s) in is_sv.iter().enumerate() {
        if s {
            remap[i] = rows;
            data.extend(x.dense_row(i));
            rows += 1;
        }
    }
    let mut hit_cap = false;
    let pairs = raw_pairs
        .into_iter()
        .map(|(a, b, sv, coef, alpha, rho, iterations, converged)| {
            hit_cap |= !converged;
            PairClassifier {
                positive: a,
                negative: b,
                sv: sv.into_iter().map(|i| remap[i]).collect(),
                coef,
                alpha,
                rho,
                iterations,
                converged,
            }
        })
        .collect();
    Ok(SvmModel {
        pairs,
        support_vectors: DenseMatrix { data, rows, cols: x.cols() },
        n_classes: k,
        gamma,
        c: params.c,
        hit_iteration_cap: hit_cap,
    })
}

/// Returns `(alpha, rho, iterations, converged)` for one binary problem on
/// the rows `idx` with labels `y` in {+1, -1}.
fn solve_pair(
    x: &FeatureMatrix,
    norms: &[f64],
    idx: &[usize],
    y: &[f64],
    gamma: f64,
    params: &SvmParams,
    work: &mut Work,
) -> (Vec<f64>, f64, usize, bool) {
    let n = idx.len();
    let c = params.c;
    // Q_ij = y_i y_j K(x_i, x_j)
    let mut q = vec![0.0; n * n];
    let mut ops = 0u64;
    for s in 0..n {
        let xs = x.dense_row(idx[s]);
        for t in s..n {
            let (dot, o) = row_dot(x, idx[t], &xs);
            ops += o;
            let kv = (-gamma * (norms[idx[s]] + norms[idx[t]] - 2.0 * dot).max(0.0)).exp();
            let v = y[s] * y[t] * kv;
            q[s * n + t] = v;
            q[t * n + s] = v;
        }
    }
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iter {
        // maximal violating pair
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        ops += n as u64;
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qii = q[i * n + i];
        let qjj = q[j * n + j];
        let qij = q[i * n + j];
        if y[i] != y[j] {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q[t * n + i] * di + q[t * n + j] * dj;
        }
        ops += 2 * n as u64;
    }

    // rho: mean of y_i G_i over free variables, else the midpoint of the bounds
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    work.add(ops);
    (alpha, rho, iterations, converged)
}

pub fn svm_predict(model: &SvmModel, queries: &FeatureMatrix) -> Result<Vec<usize>> {
    svm_predict_metered(model, queries, &mut Work::default())
}

/// Decision value of every pair for one dense query, in pair order.
pub fn pair_decisions(model: &SvmModel, query: &[f64], work: &mut Work) -> Vec<f64> {
    let sv = &model.support_vectors;
    let kernel: Vec<f64> = (0..sv.rows)
        .map(|s| {
            let d2: f64 = sv.row(s).iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (-model.gamma * d2).exp()
        })
        .collect();
    let mut ops = (sv.rows * sv.cols + query.len()) as u64;
    let out = model
        .pairs
        .iter()
        .map(|p| {
            ops += p.sv.len() as u64;
            p.sv.iter().zip(&p.coef).map(|(&s, &c)| c * kernel[s]).sum::<f64>() - p.rho
        })
        .collect();
    work.add(ops);
    out
}

/// One-vs-one majority vote; vote ties go to the lowest class index.
pub fn svm_predict_metered(model: &SvmModel, queries: &FeatureMatrix, work: &mut Work) -> Result<Vec<usize>> {
    check_width(model.support_vectors.cols, queries)?;
    let mut out = Vec::with_capacity(queries.rows());
    for q in 0..queries.rows() {
        let query = queries.dense_row(q);
        let decisions = pair_decisions(model, &query, work);
        let mut votes = vec![0usize; model.n_classes];
        for (p, d) in model.pairs.iter().zip(decisions) {
            votes[if d > 0.0 { p.positive } else { p.negative }] += 1;
        }
        out.push(argmax_votes(&votes));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::testutil::blobs;
    use crate::classifiers::{accuracy, knn_fit, knn_predict};

    #[test]
    fn pair_counts() {
        let ten = blobs(6, 10, 3, 2.0, 1);
        assert_eq!(svm_fit(&ten, &SvmParams::default()).unwrap().pairs.len(), 45);
        let two = blobs(6, 2, 3, 2.0, 1);
        assert_eq!(svm_fit(&two, &SvmParams::default()).unwrap().pairs.len(), 1);
    }

    #[test]
    fn separable_blobs_accuracy() {
        let train = blobs(60, 2, 4, 4.0, 3);
        let test = blobs(40, 2, 4, 4.0, 4);
        let model = svm_fit(&train, &SvmParams::default()).unwrap();
        let svm_acc = accuracy(&svm_predict(&model, &test.features).unwrap(), &test.labels).unwrap();
        let knn = knn_fit(&train, 5).unwrap();
        let knn_acc = accuracy(&knn_predict(&knn, &test.features, 1).unwrap(), &test.labels).unwrap();
        assert!(svm_acc >= 0.95, "svm {svm_acc}");
        assert!(knn_acc >= 0.95, "knn oracle {knn_acc}");
    }

    #[test]
    fn duals_in_box_and_kkt_on_free_vectors() {
        let train = blobs(40, 3, 3, 1.5, 9);
        let params = SvmParams::default();
        let model = svm_fit(&train, &params).unwrap();
        assert!(!model.hit_iteration_cap);
        let mut w = Work::default();
        for (pi, p) in model.pairs.iter().enumerate() {
            for &a in &p.alpha {
                assert!(a > 0.0 && a <= params.c);
            }
            for (k, &s) in p.sv.iter().enumerate() {
                let y = p.coef[k].signum();
                let f = pair_decisions(&model, model.support_vectors.row(s), &mut w)[pi];
                if p.alpha[k] < params.c {
                    assert!((y * f - 1.0).abs() <= 2.0 * params.tol, "free sv margin {}", y * f);
                } else {
                    assert!(y * f <= 1.0 + 2.0 * params.tol);
                }
            }
        }
    }

    #[test]
    fn iteration_cap_sets_flag() {
        let train = blobs(30, 2, 2, 0.5, 1);
        let model = svm_fit(&train, &SvmParams { max_iter: 2, ..Default::default() }).unwrap();
        assert!(model.hit_iteration_cap);
        assert!(!model.pairs[0].converged);
    }

    #[test]
    fn vote_tie_goes_low() {
        // three classes, each pair decision constructed by rho alone
        let model = SvmModel {
            pairs: vec![
                PairClassifier { positive: 0, negative: 1, sv: vec![], coef: vec![], alpha: vec![], rho: -1.0, iterations: 0, converged: true },
                PairClassifier { positive: 0, negative: 2, sv: vec![], coef: vec![], alpha: vec![], rho: 1.0, iterations: 0, converged: true },
                PairClassifier { positive: 1, negative: 2, sv: vec![], coef: vec![], alpha: vec![], rho: -1.0, iterations: 0, converged: true },
            ],
            support_vectors: DenseMatrix { data: vec![], rows: 0, cols: 1 },
            n_classes: 3,
            gamma: 1.0,
            c: 1.0,
            hit_iteration_cap: false,
        };
        // votes: 0, 2, 1 -> one each -> class 0
        let q = FeatureMatrix::Dense(DenseMatrix { data: vec![0.0], rows: 1, cols: 1 });
        assert_eq!(svm_predict(&model, &q).unwrap(), vec![0]);
    }

    #[test]
    fn parameter_errors() {
        let d = blobs(5, 2, 2, 1.0, 0);
        assert!(svm_fit(&d, &SvmParams { c: 0.0, ..Default::default() }).is_err());
        assert!(svm_fit(&d, &SvmParams { gamma: Some(-1.0), ..Default::default() }).is_err());
    }

    #[test]
    fn support_vectors_grow_with_size() {
        // overlapping classes: support vector count rises with the sample
        let mut holds = 0;
        for seed in 0..5 {
            let counts: Vec<usize> = [20, 40, 80]
                .iter()
                .map(|&n| svm_fit(&blobs(n, 2, 3, 1.0, seed), &SvmParams::default()).unwrap().n_support())
                .collect();
            if counts.windows(2).all(|w| w[0] <= w[1]) {
                holds += 1;
            }
        }
        assert!(holds >= 3, "{holds}/5");
    }
}
