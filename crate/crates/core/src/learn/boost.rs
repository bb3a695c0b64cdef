use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Criterion, RegressionTree, TreeParams};

/// Stagewise squared-error boosting: each stage fits a depth-limited tree to
/// the current residuals and is added with weight `learning_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl BoostedTrees {
    pub fn fit(
        x: &[f64],
        n_features: usize,
        y: &[f64],
        max_depth: usize,
        n_estimators: usize,
        learning_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n = y.len();
        let base = y.iter().sum::<f64>() / n as f64;
        let mut pred = vec![base; n];
        let params = TreeParams {
            max_depth: Some(max_depth),
            criterion: Criterion::SquaredError,
            ..TreeParams::default()
        };
        let mut trees = Vec::with_capacity(n_estimators);
        let mut residual = vec![0.0; n];
        for _ in 0..n_estimators {
            for i in 0..n {
                residual[i] = y[i] - pred[i];
            }
            let tree = RegressionTree::fit(x, n_features, &residual, &params, rng);
            for (i, p) in pred.iter_mut().enumerate() {
                *p += learning_rate * tree.predict(&x[i * n_features..(i + 1) * n_features]);
            }
            trees.push(tree);
        }
        BoostedTrees {
            base,
            learning_rate,
            trees,
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }
}
