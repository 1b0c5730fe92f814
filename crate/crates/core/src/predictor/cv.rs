//! k-fold cross validation and randomized hyper-parameter search.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit_model, Matrix, ModelSpec};
use crate::error::{Error, Result};
use crate::metrics::{r_squared, rmse};
use crate::predictor::ForestParams;
use crate::scalar::{mean, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore<T> {
    pub n_test: usize,
    /// `None` when the held-out targets are constant (always so for a
    /// single-row fold).
    pub r_squared: Option<T>,
    pub rmse: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport<T> {
    pub folds: Vec<FoldScore<T>>,
    /// Mean and standard deviation over folds with a defined R².
    pub mean_r_squared: Option<T>,
    pub std_r_squared: Option<T>,
    pub mean_rmse: T,
    pub std_rmse: T,
    /// R² of all out-of-fold predictions pooled together.
    pub pooled_r_squared: Option<T>,
    pub out_of_fold: Vec<T>,
}

impl<T: Scalar> CvReport<T> {
    /// Mean fold R², falling back to the pooled value.
    pub fn score(&self) -> Option<T> {
        self.mean_r_squared.or(self.pooled_r_squared)
    }
}

/// Fold index of each row: a seeded shuffle dealt round-robin, so fold
/// sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

fn mean_std<T: Scalar>(xs: &[T]) -> (T, T) {
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::of_usize(xs.len().max(1));
    (m, var.sqrt())
}

pub fn kfold_cv<T: Scalar>(x: &Matrix<T>, y: &[T], k: usize, spec: &ModelSpec<T>, seed: u64) -> Result<CvReport<T>> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: y.len(),
        });
    }
    if k < 2 {
        return Err(Error::config("k", format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::config("k", format!("{k} folds exceed {n} rows")));
    }
    let fold = fold_assignment(n, k, seed);
    let mut folds = Vec::with_capacity(k);
    let mut oof = vec![T::zero(); n];
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<T> = train.iter().map(|&i| y[i]).collect();
        let model = fit_model(&xt, &yt, spec)?;
        let mut pred = Vec::with_capacity(test.len());
        for &i in &test {
            let p = model.predict_row(x.row(i))?;
            oof[i] = p;
            pred.push(p);
        }
        let truth: Vec<T> = test.iter().map(|&i| y[i]).collect();
        folds.push(FoldScore {
            n_test: test.len(),
            r_squared: r_squared(&pred, &truth).ok(),
            rmse: rmse(&pred, &truth)?,
        });
    }
    let r2s: Vec<T> = folds.iter().filter_map(|f| f.r_squared).collect();
    let (mean_r2, std_r2) = if r2s.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&r2s);
        (Some(m), Some(s))
    };
    let rmses: Vec<T> = folds.iter().map(|f| f.rmse).collect();
    let (mean_rmse, std_rmse) = mean_std(&rmses);
    Ok(CvReport {
        pooled_r_squared: r_squared(&oof, y).ok(),
        folds,
        mean_r_squared: mean_r2,
        std_r_squared: std_r2,
        mean_rmse,
        std_rmse,
        out_of_fold: oof,
    })
}

/// Candidate values for each forest hyper-parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub n_trees: Vec<usize>,
    pub max_features: Vec<Option<usize>>,
    pub max_depth: Vec<Option<usize>>,
    pub bootstrap: Vec<bool>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
}

impl ParamGrid {
    /// The grid holding only `params`' values.
    pub fn single(params: &ForestParams) -> Self {
        Self {
            n_trees: vec![params.n_trees],
            max_features: vec![params.max_features],
            max_depth: vec![params.max_depth],
            bootstrap: vec![params.bootstrap],
            min_samples_leaf: vec![params.min_samples_leaf],
            min_samples_split: vec![params.min_samples_split],
        }
    }

    pub fn size(&self) -> usize {
        self.n_trees.len()
            * self.max_features.len()
            * self.max_depth.len()
            * self.bootstrap.len()
            * self.min_samples_leaf.len()
            * self.min_samples_split.len()
    }

    /// Combination `i` in row-major order over the fields as declared.
    pub fn combination(&self, mut i: usize, seed: u64) -> ForestParams {
        let mut pick = |len: usize| {
            let r = i % len;
            i /= len;
            r
        };
        let split = self.min_samples_split[pick(self.min_samples_split.len())];
        let leaf = self.min_samples_leaf[pick(self.min_samples_leaf.len())];
        let bootstrap = self.bootstrap[pick(self.bootstrap.len())];
        let depth = self.max_depth[pick(self.max_depth.len())];
        let features = self.max_features[pick(self.max_features.len())];
        let trees = self.n_trees[pick(self.n_trees.len())];
        ForestParams {
            n_trees: trees,
            max_features: features,
            max_depth: depth,
            bootstrap,
            min_samples_leaf: leaf,
            min_samples_split: split,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let lens = [
            ("n_trees", self.n_trees.len()),
            ("max_features", self.max_features.len()),
            ("max_depth", self.max_depth.len()),
            ("bootstrap", self.bootstrap.len()),
            ("min_samples_leaf", self.min_samples_leaf.len()),
            ("min_samples_split", self.min_samples_split.len()),
        ];
        for (name, len) in lens {
            if len == 0 {
                return Err(Error::config(name, "grid axis is empty"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrial<T> {
    pub params: ForestParams,
    pub score: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult<T> {
    pub best: ForestParams,
    pub best_score: Option<T>,
    /// In sampling order.
    pub trials: Vec<SearchTrial<T>>,
}

/// Samples `n_iter` distinct grid points (all of them, in grid order, when
/// the grid is that small), scores each by mean k-fold R² on shared folds
/// and returns the best; ties keep the earlier sample.
pub fn random_search<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    grid: &ParamGrid,
    n_iter: usize,
    cv_k: usize,
    seed: u64,
) -> Result<SearchResult<T>> {
    if n_iter == 0 {
        return Err(Error::config("n_iter", "must be > 0"));
    }
    grid.validate()?;
    let total = grid.size();
    let picks: Vec<usize> = if n_iter >= total {
        (0..total).collect()
    } else {
        index::sample(&mut ChaCha8Rng::seed_from_u64(seed), total, n_iter).into_vec()
    };
    let mut trials = Vec::with_capacity(picks.len());
    let mut best: Option<(usize, T)> = None;
    for (t, &i) in picks.iter().enumerate() {
        let params = grid.combination(i, seed);
        let report = kfold_cv(x, y, cv_k, &ModelSpec::forest(params.clone()), seed)?;
        let score = report.score();
        if let Some(s) = score {
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((t, s));
            }
        }
        trials.push(SearchTrial { params, score });
    }
    let (bi, bs) = match best {
        Some((i, s)) => (i, Some(s)),
        None => (0, None),
    };
    Ok(SearchResult {
        best: trials[bi].params.clone(),
        best_score: bs,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn table(n: usize, noise: f64, seed: u64) -> (Matrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let r: Vec<f64> = (0..5).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect();
            let signal = 5.0 * r[0] * r[1] + 3.0 * r[2] - 2.0 * r[3] * (1.0 - r[0]);
            y.push(signal + noise * rng.gen_range(-1.0..1.0));
            rows.push(r);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn folds_partition_evenly() {
        for n in [10, 23, 57] {
            let f = fold_assignment(n, 10, 3);
            let mut counts = [0usize; 10];
            f.iter().for_each(|&i| counts[i] += 1);
            assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            assert_eq!(counts.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn leave_one_out() {
        let (x, y) = table(12, 0.1, 1);
        let r = kfold_cv(&x, &y, 12, &ModelSpec::Ols, 0).unwrap();
        assert_eq!(r.folds.len(), 12);
        assert!(r.folds.iter().all(|f| f.n_test == 1 && f.r_squared.is_none()));
        assert!(r.mean_r_squared.is_none());
        assert!(r.pooled_r_squared.is_some());
    }

    #[test]
    fn memorizing_tree_on_replicated_rows() {
        let (x0, y0) = table(20, 0.0, 2);
        // ten copies of every row: each fold's rows also sit in training
        let idx: Vec<usize> = (0..200).map(|i| i % 20).collect();
        let x = x0.select_rows(&idx);
        let y: Vec<f64> = idx.iter().map(|&i| y0[i]).collect();
        let r = kfold_cv(&x, &y, 2, &ModelSpec::forest(ForestParams::memorizing()), 5).unwrap();
        assert_eq!(r.mean_r_squared, Some(1.0));
        assert_eq!(r.mean_rmse, 0.0);
    }

    #[test]
    fn k_bounds() {
        let (x, y) = table(5, 0.1, 1);
        assert!(kfold_cv(&x, &y, 6, &ModelSpec::Ols, 0).is_err());
        assert!(kfold_cv(&x, &y, 1, &ModelSpec::Ols, 0).is_err());
    }

    #[test]
    fn single_combination_grid() {
        let (x, y) = table(60, 0.2, 3);
        let p = ForestParams { n_trees: 5, seed: 1, ..Default::default() };
        let grid = ParamGrid::single(&p);
        let r = random_search(&x, &y, &grid, 3, 5, 1).unwrap();
        assert_eq!(r.best, p);
        assert_eq!(r.trials.len(), 1);
        assert!(random_search(&x, &y, &grid, 0, 5, 1).is_err());
    }

    #[test]
    fn exhaustive_when_grid_small() {
        let (x, y) = table(60, 0.2, 3);
        let grid = ParamGrid {
            n_trees: vec![2, 4],
            max_features: vec![None, Some(5)],
            max_depth: vec![Some(3)],
            bootstrap: vec![true],
            min_samples_leaf: vec![1],
            min_samples_split: vec![2],
        };
        let r = random_search(&x, &y, &grid, 10, 3, 4).unwrap();
        assert_eq!(r.trials.len(), 4);
        let mut seen: Vec<_> = r.trials.iter().map(|t| (t.params.n_trees, t.params.max_features)).collect();
        seen.sort();
        assert_eq!(seen, vec![(2, None), (2, Some(5)), (4, None), (4, Some(5))]);
        let top = r.trials.iter().filter_map(|t| t.score).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_score, Some(top));
    }

    #[test]
    fn sampled_subset_is_distinct() {
        let (x, y) = table(40, 0.2, 3);
        let grid = ParamGrid {
            n_trees: vec![1, 2, 3],
            max_features: vec![None],
            max_depth: vec![Some(2), Some(4), None],
            bootstrap: vec![true, false],
            min_samples_leaf: vec![1],
            min_samples_split: vec![2],
        };
        let r = random_search(&x, &y, &grid, 5, 4, 8).unwrap();
        assert_eq!(r.trials.len(), 5);
        for (i, a) in r.trials.iter().enumerate() {
            for b in &r.trials[i + 1..] {
                assert_ne!(a.params, b.params);
            }
        }
    }
}
