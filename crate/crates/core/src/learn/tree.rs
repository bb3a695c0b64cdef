//! CART regression trees with exact greedy splits.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    SquaredError,
    AbsoluteError,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::SquaredError => "squared_error",
            Criterion::AbsoluteError => "absolute_error",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_error" | "mse" => Ok(Criterion::SquaredError),
            "absolute_error" | "mae" => Ok(Criterion::AbsoluteError),
            other => Err(Error::UnknownVariant {
                kind: "criterion",
                value: other.into(),
            }),
        }
    }
}

/// Growth limits for a single tree, in absolute row counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features considered at each split.
    pub max_features: f64,
    pub criterion: Criterion,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: 1.0,
            criterion: Criterion::SquaredError,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub n_features: usize,
    pub root: Node,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Sample counts of all leaves, left to right.
    pub fn leaf_sizes(&self) -> Vec<usize> {
        fn walk(n: &Node, out: &mut Vec<usize>) {
            match n {
                Node::Leaf { samples, .. } => out.push(*samples),
                Node::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        fn d(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }

    /// Fits a tree on row-major `x` (`n_features` columns) against `y`.
    pub fn fit(x: &[f64], n_features: usize, y: &[f64], params: &TreeParams, rng: &mut ChaCha8Rng) -> Self {
        assert_eq!(x.len(), y.len() * n_features);
        assert!(!y.is_empty(), "cannot fit a tree on zero rows");
        let mut builder = Builder {
            x,
            y,
            n_features,
            params,
            rng,
        };
        let mut idx: Vec<usize> = (0..y.len()).collect();
        let root = builder.build(&mut idx, 0);
        RegressionTree { n_features, root }
    }
}

struct Builder<'a> {
    x: &'a [f64],
    y: &'a [f64],
    n_features: usize,
    params: &'a TreeParams,
    rng: &'a mut ChaCha8Rng,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    cost: f64,
}

impl Builder<'_> {
    fn value(&self, row: usize, feature: usize) -> f64 {
        self.x[row * self.n_features + feature]
    }

    fn leaf_value(&self, idx: &[usize]) -> f64 {
        match self.params.criterion {
            Criterion::SquaredError => idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64,
            Criterion::AbsoluteError => {
                let mut v: Vec<f64> = idx.iter().map(|&i| self.y[i]).collect();
                v.sort_by(f64::total_cmp);
                let n = v.len();
                if n % 2 == 1 {
                    v[n / 2]
                } else {
                    (v[n / 2 - 1] + v[n / 2]) / 2.0
                }
            }
        }
    }

    fn node_cost(&self, idx: &[usize]) -> f64 {
        match self.params.criterion {
            Criterion::SquaredError => {
                let mut acc = SquaredAcc::default();
                idx.iter().for_each(|&i| acc.push(self.y[i]));
                acc.cost()
            }
            Criterion::AbsoluteError => {
                let mut acc = MedianAcc::default();
                idx.iter().for_each(|&i| acc.push(self.y[i]));
                acc.cost()
            }
        }
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Node {
        let n = idx.len();
        let leaf = Node::Leaf {
            value: self.leaf_value(idx),
            samples: n,
        };
        let p = self.params;
        if n < p.min_samples_split
            || n < 2 * p.min_samples_leaf.max(1)
            || p.max_depth.is_some_and(|d| depth >= d)
        {
            return leaf;
        }
        let parent_cost = self.node_cost(idx);
        if parent_cost <= 1e-14 {
            return leaf;
        }

        let k = ((p.max_features * self.n_features as f64) as usize).clamp(1, self.n_features);
        let mut features: Vec<usize> = if k == self.n_features {
            (0..self.n_features).collect()
        } else {
            sample(self.rng, self.n_features, k).into_vec()
        };
        features.sort_unstable();

        let mut best: Option<SplitChoice> = None;
        for f in features {
            if let Some(c) = self.best_split(idx, f) {
                if best.as_ref().is_none_or(|b| c.cost < b.cost) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best.filter(|b| b.cost < parent_cost - 1e-12 * parent_cost.max(1.0)) else {
            return leaf;
        };

        let mut left_count = 0;
        for i in 0..n {
            if self.value(idx[i], best.feature) <= best.threshold {
                idx.swap(i, left_count);
                left_count += 1;
            }
        }
        let (l, r) = idx.split_at_mut(left_count);
        // stable child order regardless of swap history
        l.sort_unstable();
        r.sort_unstable();
        Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(self.build(l, depth + 1)),
            right: Box::new(self.build(r, depth + 1)),
        }
    }

    fn best_split(&self, idx: &[usize], feature: usize) -> Option<SplitChoice> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut pairs: Vec<(f64, f64)> = idx.iter().map(|&i| (self.value(i, feature), self.y[i])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

        // prefix[i] = cost of the first i rows, suffix[i] = cost of rows i..n
        let (prefix, suffix) = match self.params.criterion {
            Criterion::SquaredError => scan::<SquaredAcc>(&pairs),
            Criterion::AbsoluteError => scan::<MedianAcc>(&pairs),
        };

        let mut best: Option<SplitChoice> = None;
        for i in min_leaf..=n - min_leaf {
            if pairs[i - 1].0 >= pairs[i].0 {
                continue;
            }
            let cost = prefix[i] + suffix[i];
            if best.as_ref().is_none_or(|b| cost < b.cost) {
                let mid = (pairs[i - 1].0 + pairs[i].0) / 2.0;
                // midpoint can round onto the upper value for adjacent floats
                let threshold = if mid < pairs[i].0 { mid } else { pairs[i - 1].0 };
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    cost,
                });
            }
        }
        best
    }
}

trait CostAcc: Default {
    fn push(&mut self, y: f64);
    fn cost(&self) -> f64;
}

fn scan<A: CostAcc>(pairs: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let n = pairs.len();
    let mut prefix = vec![0.0; n + 1];
    let mut acc = A::default();
    for (i, p) in pairs.iter().enumerate() {
        acc.push(p.1);
        prefix[i + 1] = acc.cost();
    }
    let mut suffix = vec![0.0; n + 1];
    let mut acc = A::default();
    for i in (0..n).rev() {
        acc.push(pairs[i].1);
        suffix[i] = acc.cost();
    }
    (prefix, suffix)
}

/// Sum of squared deviations from the mean.
#[derive(Default)]
struct SquaredAcc {
    n: f64,
    mean: f64,
    m2: f64,
}

impl CostAcc for SquaredAcc {
    fn push(&mut self, y: f64) {
        // Welford
        self.n += 1.0;
        let delta = y - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (y - self.mean);
    }

    fn cost(&self) -> f64 {
        self.m2.max(0.0)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Sum of absolute deviations from the median, maintained with two heaps.
#[derive(Default)]
struct MedianAcc {
    low: BinaryHeap<Key>,
    high: BinaryHeap<Reverse<Key>>,
    sum_low: f64,
    sum_high: f64,
}

impl CostAcc for MedianAcc {
    fn push(&mut self, y: f64) {
        if self.low.peek().is_none_or(|m| y <= m.0) {
            self.low.push(Key(y));
            self.sum_low += y;
        } else {
            self.high.push(Reverse(Key(y)));
            self.sum_high += y;
        }
        if self.low.len() > self.high.len() + 1 {
            let Key(v) = self.low.pop().expect("non-empty");
            self.sum_low -= v;
            self.high.push(Reverse(Key(v)));
            self.sum_high += v;
        } else if self.high.len() > self.low.len() {
            let Reverse(Key(v)) = self.high.pop().expect("non-empty");
            self.sum_high -= v;
            self.low.push(Key(v));
            self.sum_low += v;
        }
    }

    fn cost(&self) -> f64 {
        let Some(&Key(m)) = self.low.peek() else {
            return 0.0;
        };
        let (nl, nh) = (self.low.len() as f64, self.high.len() as f64);
        (self.sum_high - nh * m + nl * m - self.sum_low).max(0.0)
    }
}
