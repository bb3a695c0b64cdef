//! Per-cluster occupancy regressors: decision trees and gradient-boosted
//! trees, selected by cross-validated RMSE.

mod boost;
mod tree;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use boost::BoostedTrees;
pub use tree::{Criterion, Node, RegressionTree, TreeParams};

use crate::aggregate::{AggregatedPoint, Datapoints, FeatureVector};
use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 5;
pub const DECISION_TREE_DRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    DecisionTree,
    Gbt,
}

impl Learner {
    pub fn as_str(self) -> &'static str {
        match self {
            Learner::DecisionTree => "dt",
            Learner::Gbt => "gbt",
        }
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Learner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dt" | "decision_tree" => Ok(Learner::DecisionTree),
            "gbt" | "xgb" => Ok(Learner::Gbt),
            other => Err(Error::UnknownVariant {
                kind: "learner",
                value: other.into(),
            }),
        }
    }
}

/// Training rows: a row-major feature matrix and occupancy targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_features: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub source_cluster: Option<usize>,
    pub aggregation: Datapoints,
}

impl Dataset {
    pub fn new(n_features: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        if x.len() != y.len() * n_features {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: y.len() * n_features,
            });
        }
        if let Some(bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("target {bad} outside [0, 1]")));
        }
        Ok(Dataset {
            n_features,
            x,
            y,
            source_cluster: None,
            aggregation: Datapoints::Aggregate,
        })
    }

    /// Base calendar/lot features of aggregated points.
    pub fn from_points(points: &[AggregatedPoint]) -> Result<Self> {
        Self::from_points_with(points, &[])
    }

    /// Base features followed by `extra` columns that are constant per row
    /// set (cluster-level descriptors).
    pub fn from_points_with(points: &[AggregatedPoint], extra: &[f64]) -> Result<Self> {
        let n_features = FeatureVector::NAMES.len() + extra.len();
        let mut x = Vec::with_capacity(points.len() * n_features);
        for p in points {
            x.extend_from_slice(&p.features().to_array());
            x.extend_from_slice(extra);
        }
        Self::new(n_features, x, points.iter().map(|p| p.occupancy).collect())
    }

    pub fn with_source(mut self, cluster: usize, aggregation: Datapoints) -> Self {
        self.source_cluster = Some(cluster);
        self.aggregation = aggregation;
        self
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    fn subset(&self, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut x = Vec::with_capacity(rows.len() * self.n_features);
        let mut y = Vec::with_capacity(rows.len());
        for &r in rows {
            x.extend_from_slice(self.row(r));
            y.push(self.y[r]);
        }
        (x, y)
    }

    /// Concatenates datasets with equal feature width.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let first = iter.next().ok_or(Error::EmptyInput("dataset list"))?;
        let mut out = first.clone();
        out.source_cluster = None;
        for d in iter {
            if d.n_features != out.n_features {
                return Err(Error::DimensionMismatch {
                    left: out.n_features,
                    right: d.n_features,
                });
            }
            out.x.extend_from_slice(&d.x);
            out.y.extend_from_slice(&d.y);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum Hyperparameters {
    DecisionTree {
        min_samples_split: usize,
        /// Fraction of the training rows.
        min_samples_leaf: f64,
        max_features: f64,
        criterion: Criterion,
        min_weight_fraction_leaf: f64,
    },
    Gbt {
        max_depth: usize,
        n_estimators: usize,
        learning_rate: f64,
    },
}

impl Hyperparameters {
    pub fn learner(&self) -> Learner {
        match self {
            Hyperparameters::DecisionTree { .. } => Learner::DecisionTree,
            Hyperparameters::Gbt { .. } => Learner::Gbt,
        }
    }

    pub fn fit(&self, x: &[f64], n_features: usize, y: &[f64], seed: u64) -> Regressor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            Hyperparameters::DecisionTree {
                min_samples_split,
                min_samples_leaf,
                max_features,
                criterion,
                min_weight_fraction_leaf,
            } => {
                let n = y.len() as f64;
                let leaf = (min_samples_leaf * n)
                    .ceil()
                    .max((min_weight_fraction_leaf * n).ceil())
                    .max(1.0) as usize;
                let params = TreeParams {
                    max_depth: None,
                    min_samples_split,
                    min_samples_leaf: leaf,
                    max_features,
                    criterion,
                };
                Regressor::Tree(RegressionTree::fit(x, n_features, y, &params, &mut rng))
            }
            Hyperparameters::Gbt {
                max_depth,
                n_estimators,
                learning_rate,
            } => Regressor::Boosted(BoostedTrees::fit(
                x,
                n_features,
                y,
                max_depth,
                n_estimators,
                learning_rate,
                &mut rng,
            )),
        }
    }
}

/// Search space values for the decision tree's randomized search.
pub mod decision_tree_space {
    use super::Criterion;

    pub const MIN_SAMPLES_SPLIT: [usize; 4] = [2, 3, 4, 5];
    pub const MIN_SAMPLES_LEAF: (f64, f64) = (0.03, 0.1);
    pub const MAX_FEATURES: [f64; 4] = [0.7, 0.8, 0.9, 1.0];
    pub const CRITERION: [Criterion; 2] = [Criterion::SquaredError, Criterion::AbsoluteError];
    pub const MIN_WEIGHT_FRACTION_LEAF: [f64; 3] = [0.0, 0.1, 0.2];
}

/// Grid values for gradient boosting.
pub mod gbt_space {
    pub const MAX_DEPTH: [usize; 2] = [2, 3];
    pub const N_ESTIMATORS: [usize; 2] = [50, 100];
    pub const LEARNING_RATE: [f64; 2] = [0.1, 0.25];
}

/// `draws` configurations sampled uniformly from the decision tree space.
pub fn sample_decision_tree_configs(seed: u64, draws: usize) -> Vec<Hyperparameters> {
    use decision_tree_space::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws)
        .map(|_| Hyperparameters::DecisionTree {
            min_samples_split: MIN_SAMPLES_SPLIT[rng.random_range(0..MIN_SAMPLES_SPLIT.len())],
            min_samples_leaf: rng.random_range(MIN_SAMPLES_LEAF.0..=MIN_SAMPLES_LEAF.1),
            max_features: MAX_FEATURES[rng.random_range(0..MAX_FEATURES.len())],
            criterion: CRITERION[rng.random_range(0..CRITERION.len())],
            min_weight_fraction_leaf: MIN_WEIGHT_FRACTION_LEAF
                [rng.random_range(0..MIN_WEIGHT_FRACTION_LEAF.len())],
        })
        .collect()
}

/// The exhaustive boosting grid in a fixed order.
pub fn gbt_grid() -> Vec<Hyperparameters> {
    use gbt_space::*;
    let mut grid = Vec::new();
    for &max_depth in &MAX_DEPTH {
        for &n_estimators in &N_ESTIMATORS {
            for &learning_rate in &LEARNING_RATE {
                grid.push(Hyperparameters::Gbt {
                    max_depth,
                    n_estimators,
                    learning_rate,
                });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressor {
    Tree(RegressionTree),
    Boosted(BoostedTrees),
}

impl Regressor {
    /// Raw model output, not clamped.
    pub fn predict_raw(&self, row: &[f64]) -> f64 {
        match self {
            Regressor::Tree(t) => t.predict(row),
            Regressor::Boosted(b) => b.predict(row),
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.predict_raw(row).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub learner: Learner,
    pub hyperparameters: Hyperparameters,
    pub cv_rmse: f64,
    pub source_cluster: Option<usize>,
    pub seed: u64,
    pub n_features: usize,
    pub regressor: Regressor,
}

impl TrainedModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.regressor.predict(row)
    }

    /// Test RMSE of this model on `data`.
    pub fn rmse_on(&self, data: &Dataset) -> Result<f64> {
        if data.n_features != self.n_features {
            return Err(Error::DimensionMismatch {
                left: self.n_features,
                right: data.n_features,
            });
        }
        let predicted: Vec<f64> = (0..data.len()).map(|i| self.predict_row(data.row(i))).collect();
        rmse(&predicted, &data.y)
    }
}

/// Occupancy fraction for base features, clamped to [0, 1].
pub fn predict(model: &TrainedModel, features: &FeatureVector) -> f64 {
    model.predict_row(&features.to_array())
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput("rmse inputs"));
    }
    let mse = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / predicted.len() as f64;
    Ok(mse.sqrt())
}

/// Row indices of each fold: one seeded shuffle, then contiguous parts whose
/// sizes differ by at most one.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Mean test RMSE over `folds` folds.
pub fn cross_validate(data: &Dataset, config: &Hyperparameters, folds: usize, seed: u64) -> Result<f64> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if data.len() < folds {
        return Err(Error::TooFewRows {
            needed: folds,
            have: data.len(),
        });
    }
    let parts = fold_indices(data.len(), folds, seed);
    let mut total = 0.0;
    for (f, test) in parts.iter().enumerate() {
        let train: Vec<usize> = parts
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, p)| p.iter().copied())
            .collect();
        let (tx, ty) = data.subset(&train);
        let model = config.fit(&tx, data.n_features, &ty, seed);
        let predicted: Vec<f64> = test.iter().map(|&i| model.predict(data.row(i))).collect();
        let actual: Vec<f64> = test.iter().map(|&i| data.y[i]).collect();
        total += rmse(&predicted, &actual)?;
    }
    Ok(total / folds as f64)
}

/// Scores every candidate by CV and refits the best (earliest on ties).
pub fn select_and_fit(data: &Dataset, candidates: &[Hyperparameters], seed: u64) -> Result<TrainedModel> {
    if data.len() < DEFAULT_FOLDS {
        return Err(Error::TooFewRows {
            needed: DEFAULT_FOLDS,
            have: data.len(),
        });
    }
    let scores = candidates
        .par_iter()
        .map(|c| cross_validate(data, c, DEFAULT_FOLDS, seed))
        .collect::<Result<Vec<f64>>>()?;
    let (best, cv_rmse) = scores
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, &s)| match acc {
            Some((_, b)) if b <= s => acc,
            _ => Some((i, s)),
        })
        .ok_or(Error::EmptyInput("candidate list"))?;
    let config = candidates[best];
    Ok(TrainedModel {
        learner: config.learner(),
        hyperparameters: config,
        cv_rmse,
        source_cluster: data.source_cluster,
        seed,
        n_features: data.n_features,
        regressor: config.fit(&data.x, data.n_features, &data.y, seed),
    })
}

pub fn train_decision_tree(data: &Dataset, seed: u64) -> Result<TrainedModel> {
    select_and_fit(data, &sample_decision_tree_configs(seed, DECISION_TREE_DRAWS), seed)
}

pub fn train_gbt(data: &Dataset, seed: u64) -> Result<TrainedModel> {
    select_and_fit(data, &gbt_grid(), seed)
}

pub fn train(learner: Learner, data: &Dataset, seed: u64) -> Result<TrainedModel> {
    match learner {
        Learner::DecisionTree => train_decision_tree(data, seed),
        Learner::Gbt => train_gbt(data, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(rows: &[([f64; 6], f64)]) -> Dataset {
        Dataset::new(
            6,
            rows.iter().flat_map(|(x, _)| x.iter().copied()).collect(),
            rows.iter().map(|(_, y)| *y).collect(),
        )
        .unwrap()
    }

    fn hourly(n: usize, target: impl Fn(usize) -> f64) -> Dataset {
        let rows: Vec<_> = (0..n)
            .map(|i| {
                let hour = (i % 24) as f64;
                ([2011.0, 13.0 + (i / 168) as f64, 1.0 + ((i / 24) % 7) as f64, hour, 1.0, 20.0], target(i))
            })
            .collect();
        dataset(&rows)
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.53553).abs() < 1e-5);
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(rmse(&[], &[]), Err(Error::EmptyInput(_))));
    }

    proptest! {
        #[test]
        fn rmse_is_symmetric(v in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            prop_assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
        }

        #[test]
        fn fold_sizes_differ_by_at_most_one(n in 2usize..200, folds in 2usize..12, seed in 0u64..100) {
            prop_assume!(folds <= n);
            let parts = fold_indices(n, folds, seed);
            let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<usize> = parts.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn constant_target_decision_tree() {
        let data = hourly(60, |_| 0.4);
        let m = train_decision_tree(&data, 42).unwrap();
        assert_eq!(m.cv_rmse, 0.0);
        for i in 0..data.len() {
            assert_eq!(m.predict_row(data.row(i)), 0.4);
        }
        let f = FeatureVector {
            year: 2017,
            week: 44,
            weekday: 6,
            hour: 3,
            price_rate: 1.0,
            total_spots: 20.0,
        };
        assert_eq!(predict(&m, &f), 0.4);
    }

    #[test]
    fn decision_tree_search_is_deterministic_and_contained() {
        let data = hourly(120, |i| ((i % 24) as f64 / 30.0 + (i % 5) as f64 * 0.01).min(1.0));
        let a = train_decision_tree(&data, 7).unwrap();
        let b = train_decision_tree(&data, 7).unwrap();
        assert_eq!(a, b);
        for seed in 0..20 {
            for c in sample_decision_tree_configs(seed, DECISION_TREE_DRAWS) {
                let Hyperparameters::DecisionTree {
                    min_samples_split,
                    min_samples_leaf,
                    max_features,
                    min_weight_fraction_leaf,
                    ..
                } = c
                else {
                    panic!("wrong learner");
                };
                assert!(decision_tree_space::MIN_SAMPLES_SPLIT.contains(&min_samples_split));
                assert!((0.03..=0.1).contains(&min_samples_leaf));
                assert!(decision_tree_space::MAX_FEATURES.contains(&max_features));
                assert!(decision_tree_space::MIN_WEIGHT_FRACTION_LEAF.contains(&min_weight_fraction_leaf));
            }
        }
    }

    #[test]
    fn decision_tree_leaf_fraction_is_enforced() {
        let data = hourly(200, |i| (i % 24) as f64 / 24.0);
        for c in sample_decision_tree_configs(3, 10) {
            let Regressor::Tree(tree) = c.fit(&data.x, 6, &data.y, 3) else {
                unreachable!()
            };
            let Hyperparameters::DecisionTree { min_samples_leaf, .. } = c else {
                unreachable!()
            };
            let min = (min_samples_leaf * 200.0).ceil() as usize;
            assert!(tree.leaf_sizes().iter().all(|&s| s >= min));
        }
    }

    #[test]
    fn gbt_learns_a_step() {
        let data = hourly(200, |i| if i % 24 < 12 { 0.0 } else { 1.0 });
        let m = train_gbt(&data, 42).unwrap();
        assert!(m.cv_rmse < 0.05, "{}", m.cv_rmse);
        let Hyperparameters::Gbt { learning_rate, max_depth, n_estimators } = m.hyperparameters else {
            panic!()
        };
        assert!(gbt_space::LEARNING_RATE.contains(&learning_rate));
        assert!(gbt_space::MAX_DEPTH.contains(&max_depth));
        assert!(gbt_space::N_ESTIMATORS.contains(&n_estimators));
        assert_eq!(gbt_grid().len(), 8);
    }

    #[test]
    fn predictions_are_clamped() {
        let tree = RegressionTree {
            n_features: 6,
            root: Node::Leaf { value: 1.07, samples: 1 },
        };
        let r = Regressor::Tree(tree);
        assert_eq!(r.predict_raw(&[0.0; 6]), 1.07);
        assert_eq!(r.predict(&[0.0; 6]), 1.0);
    }

    #[test]
    fn too_few_rows() {
        let data = hourly(4, |_| 0.5);
        assert!(matches!(train_gbt(&data, 0), Err(Error::TooFewRows { .. })));
        let cfg = gbt_grid()[0];
        assert!(cross_validate(&data, &cfg, 1, 0).is_err());
        assert!(cross_validate(&data, &cfg, 5, 0).is_err());
    }

    #[test]
    fn cross_validation_of_constant_target_is_zero() {
        let data = hourly(30, |_| 0.25);
        for cfg in gbt_grid() {
            assert!(cross_validate(&data, &cfg, 5, 1).unwrap() < 1e-15);
        }
    }

    #[test]
    fn leave_one_out_matches_brute_force() {
        let data = hourly(12, |i| ((i * 7) % 10) as f64 / 10.0);
        let cfg = Hyperparameters::Gbt {
            max_depth: 2,
            n_estimators: 50,
            learning_rate: 0.1,
        };
        let cv = cross_validate(&data, &cfg, data.len(), 9).unwrap();
        // independent oracle: refit on each n-1 subset in natural order
        let mut total = 0.0;
        for held in 0..data.len() {
            let rows: Vec<usize> = (0..data.len()).filter(|&i| i != held).collect();
            let x: Vec<f64> = rows.iter().flat_map(|&i| data.row(i).to_vec()).collect();
            let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
            let m = cfg.fit(&x, 6, &y, 9);
            total += (m.predict(data.row(held)) - data.y[held]).abs();
        }
        assert!((cv - total / data.len() as f64).abs() < 1e-12, "{cv}");
    }

    #[test]
    fn model_serializes_as_nested_nodes() {
        let data = hourly(48, |i| if i % 24 < 12 { 0.2 } else { 0.8 });
        let m = train_gbt(&data, 1).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"split\""));
        assert!(text.contains("\"threshold\""));
        let back: TrainedModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
