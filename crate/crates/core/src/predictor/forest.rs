//! Random forest regression: bootstrap-sampled CART trees split on mean
//! squared error, predictions averaged across trees.

use std::cmp::Ordering;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features examined per split; `None` is `floor(sqrt(n_features))`.
    pub max_features: Option<usize>,
    /// `None` grows until the other limits stop it.
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 800,
            max_features: None,
            max_depth: Some(90),
            bootstrap: true,
            min_samples_leaf: 4,
            min_samples_split: 10,
            seed: 0,
        }
    }
}

impl ForestParams {
    /// Single unrestricted tree on the full sample.
    pub fn memorizing() -> Self {
        Self {
            n_trees: 1,
            max_features: None,
            max_depth: None,
            bootstrap: false,
            min_samples_leaf: 1,
            min_samples_split: 2,
            seed: 0,
        }
    }

    pub fn features_per_split(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features.max(1))
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("n_trees", "must be >= 1"));
        }
        if let Some(k) = self.max_features {
            if k == 0 || k > n_features {
                return Err(Error::config("max_features", format!("{k} outside 1..={n_features}")));
            }
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::config("min_samples_leaf", "must be >= 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::config("min_samples_split", "must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<T> {
    Leaf {
        value: T,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
        samples: usize,
        /// Node SSE minus the children's SSE.
        sse_decrease: T,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn predict(&self, x: &[T]) -> T {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Leaf-only tree, for assembling forests by hand.
    pub fn constant(value: T) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, samples: 1 }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest<T> {
    pub trees: Vec<Tree<T>>,
    pub n_features: usize,
    pub params: ForestParams,
}

/// Importance weights plus a warning when no tree ever split.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance<T> {
    pub weights: Vec<T>,
    pub warning: Option<String>,
}

fn cmp_rows<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Fits a forest. Rows are first sorted into a canonical order so the
/// result does not depend on the input row order; each tree draws from its
/// own random stream keyed by `(seed, tree index)`, so the forest is the
/// same whatever the thread count.
pub fn rf_fit<T: Scalar>(x: &Matrix<T>, y: &[T], params: &ForestParams) -> Result<Forest<T>> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::InvalidInput("random forest on empty data".into()));
    }
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite regression target".into()));
    }
    let p = x.cols();
    params.validate(p)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        cmp_rows(x.row(a), x.row(b)).then(y[a].partial_cmp(&y[b]).unwrap_or(Ordering::Equal))
    });
    let xs = x.select_rows(&order);
    let ys: Vec<T> = order.iter().map(|&i| y[i]).collect();

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            TreeBuilder {
                x: &xs,
                y: &ys,
                params,
                k: params.features_per_split(p),
                nodes: Vec::new(),
                rng,
            }
            .build(sample)
        })
        .collect();
    Ok(Forest {
        trees,
        n_features: p,
        params: params.clone(),
    })
}

struct TreeBuilder<'a, T> {
    x: &'a Matrix<T>,
    y: &'a [T],
    params: &'a ForestParams,
    k: usize,
    nodes: Vec<Node<T>>,
    rng: ChaCha8Rng,
}

struct BestSplit<T> {
    feature: usize,
    threshold: T,
    /// position in the sorted sample where the right child starts
    at: usize,
    children_sse: T,
    sorted: Vec<usize>,
}

impl<T: Scalar> TreeBuilder<'_, T> {
    fn build(mut self, sample: Vec<usize>) -> Tree<T> {
        self.grow(sample, 0);
        Tree { nodes: self.nodes }
    }

    fn grow(&mut self, sample: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let n = sample.len();
        let (sum, sumsq) = sample
            .iter()
            .fold((T::zero(), T::zero()), |(s, q), &i| (s + self.y[i], q + self.y[i] * self.y[i]));
        let n_t = T::of_usize(n);
        let mean = sum / n_t;
        self.nodes.push(Node::Leaf { value: mean, samples: n });

        let first = self.y[sample[0]];
        let pure = sample.iter().all(|&i| self.y[i] == first);
        let depth_ok = self.params.max_depth.map_or(true, |d| depth < d);
        if pure || !depth_ok || n < self.params.min_samples_split || n < 2 * self.params.min_samples_leaf {
            return id;
        }
        let node_sse = (sumsq - sum * sum / n_t).max(T::zero());
        let Some(best) = self.best_split(&sample) else {
            return id;
        };
        let left: Vec<usize> = best.sorted[..best.at].to_vec();
        let right: Vec<usize> = best.sorted[best.at..].to_vec();
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
            samples: n,
            sse_decrease: (node_sse - best.children_sse).max(T::zero()),
        };
        id
    }

    /// Visits features in a fresh random order; stops after `k` features
    /// once some valid split exists, otherwise keeps looking.
    fn best_split(&mut self, sample: &[usize]) -> Option<BestSplit<T>> {
        let mut features: Vec<usize> = (0..self.x.cols()).collect();
        features.shuffle(&mut self.rng);
        let leaf = self.params.min_samples_leaf;
        let n = sample.len();
        let mut best: Option<BestSplit<T>> = None;
        for (visited, &f) in features.iter().enumerate() {
            if visited >= self.k && best.is_some() {
                break;
            }
            let mut sorted = sample.to_vec();
            sorted.sort_by(|&a, &b| {
                self.x
                    .get(a, f)
                    .partial_cmp(&self.x.get(b, f))
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            if self.x.get(sorted[0], f) == self.x.get(sorted[n - 1], f) {
                continue;
            }
            let (mut ls, mut lq) = (T::zero(), T::zero());
            let (ts, tq) = sorted
                .iter()
                .fold((T::zero(), T::zero()), |(s, q), &i| (s + self.y[i], q + self.y[i] * self.y[i]));
            let mut found: Option<(usize, T)> = None;
            for pos in 1..n {
                let yi = self.y[sorted[pos - 1]];
                ls = ls + yi;
                lq = lq + yi * yi;
                if pos < leaf || n - pos < leaf {
                    continue;
                }
                let (a, b) = (self.x.get(sorted[pos - 1], f), self.x.get(sorted[pos], f));
                if a == b {
                    continue;
                }
                let nl = T::of_usize(pos);
                let nr = T::of_usize(n - pos);
                let rs = ts - ls;
                let rq = tq - lq;
                let sse = (lq - ls * ls / nl).max(T::zero()) + (rq - rs * rs / nr).max(T::zero());
                if found.map_or(true, |(_, s)| sse < s) {
                    found = Some((pos, sse));
                }
            }
            if let Some((pos, sse)) = found {
                if best.as_ref().map_or(true, |b| sse < b.children_sse) {
                    let two = T::one() + T::one();
                    let threshold = (self.x.get(sorted[pos - 1], f) + self.x.get(sorted[pos], f)) / two;
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        at: pos,
                        children_sse: sse,
                        sorted,
                    });
                }
            }
        }
        best
    }
}

impl<T: Scalar> Forest<T> {
    pub fn predict(&self, x: &[T]) -> Result<T> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        let total = self.trees.iter().map(|t| t.predict(x)).sum::<T>();
        Ok(total / T::of_usize(self.trees.len()))
    }

    /// Mean decrease in impurity. Each split credits its feature with the
    /// node's sample-weighted impurity drop; per-tree totals are normalized,
    /// averaged over trees, and normalized again.
    pub fn feature_importance(&self) -> FeatureImportance<T> {
        let p = self.n_features;
        let mut acc = vec![T::zero(); p];
        let mut split_trees = 0usize;
        for tree in &self.trees {
            let mut per = vec![T::zero(); p];
            for node in &tree.nodes {
                if let Node::Split {
                    feature, sse_decrease, ..
                } = node
                {
                    per[*feature] = per[*feature] + *sse_decrease;
                }
            }
            let total = per.iter().copied().sum::<T>();
            if total > T::zero() {
                split_trees += 1;
                for (a, v) in acc.iter_mut().zip(per) {
                    *a = *a + v / total;
                }
            }
        }
        if split_trees == 0 {
            warn!("forest has no informative splits; importances are all zero");
            return FeatureImportance {
                weights: acc,
                warning: Some("forest has no informative splits".into()),
            };
        }
        let total = acc.iter().copied().sum::<T>();
        FeatureImportance {
            weights: acc.into_iter().map(|a| a / total).collect(),
            warning: None,
        }
    }
}

pub fn rf_predict<T: Scalar>(forest: &Forest<T>, x: &[T]) -> Result<T> {
    forest.predict(x)
}

pub fn feature_importance<T: Scalar>(forest: &Forest<T>) -> FeatureImportance<T> {
    forest.feature_importance()
}
