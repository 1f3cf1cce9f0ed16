//! Least-squares gradient boosting over shallow regression trees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::models::tree::{RegressionTree, Splitter, TreeParams};

#[derive(Debug, Clone)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Fraction of rows drawn (without replacement) per round.
    pub subsample: f64,
    pub min_samples_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_rounds: 200,
            max_depth: 3,
            learning_rate: 0.1,
            subsample: 1.0,
            min_samples_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoostedTrees {
    bias: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
}

impl BoostedTrees {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &BoostParams, seed: u64) -> Self {
        let n = x.len();
        let n_features = x[0].len();
        let bias = y.iter().sum::<f64>() / n as f64;
        let mut residual: Vec<f64> = y.iter().map(|v| v - bias).collect();

        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_split: 2 * params.min_samples_leaf.max(1),
            min_samples_leaf: params.min_samples_leaf,
            mtry: n_features,
            splitter: Splitter::Best,
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trees = Vec::with_capacity(params.n_rounds);
        for _ in 0..params.n_rounds {
            let rows: Vec<usize> = if params.subsample < 1.0 {
                let m = ((params.subsample * n as f64).round() as usize).clamp(2, n);
                let mut picked = rand::seq::index::sample(&mut rng, n, m).into_vec();
                picked.sort_unstable();
                picked
            } else {
                (0..n).collect()
            };
            let tree = RegressionTree::fit(x, &residual, &rows, &tree_params, &mut rng);
            for (r, res) in residual.iter_mut().enumerate() {
                *res -= params.learning_rate * tree.predict_one(&x[r]);
            }
            trees.push(tree);
        }
        BoostedTrees {
            bias,
            learning_rate: params.learning_rate,
            trees,
        }
    }

    pub fn predict_one(&self, row: &[f64]) -> f64 {
        let mut acc = self.bias;
        for tree in &self.trees {
            acc += self.learning_rate * tree.predict_one(row);
        }
        acc
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 100.0]).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| if r[0] < 0.5 { 0.0 } else { 1.0 })
            .collect();
        (x, y)
    }

    fn training_mse(model: &BoostedTrees, x: &[Vec<f64>], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(row, &yi)| {
                let e = model.predict_one(row) - yi;
                e * e
            })
            .sum::<f64>()
            / y.len() as f64
    }

    #[test]
    fn fits_a_noiseless_step_function_tightly() {
        let (x, y) = step_data();
        let model = BoostedTrees::fit(
            &x,
            &y,
            &BoostParams {
                n_rounds: 120,
                max_depth: 2,
                learning_rate: 0.2,
                ..BoostParams::default()
            },
            0,
        );
        let mse = training_mse(&model, &x, &y);
        let var = 0.25; // variance of the 0/1 step
        assert!(1.0 - mse / var >= 0.99, "training R^2 too low: {}", 1.0 - mse / var);
    }

    #[test]
    fn more_rounds_never_raise_training_mse_on_noiseless_data() {
        let (x, y) = step_data();
        let mut last = f64::INFINITY;
        for rounds in [5, 10, 25, 60, 120] {
            let model = BoostedTrees::fit(
                &x,
                &y,
                &BoostParams {
                    n_rounds: rounds,
                    max_depth: 2,
                    learning_rate: 0.3,
                    ..BoostParams::default()
                },
                7,
            );
            let mse = training_mse(&model, &x, &y);
            assert!(
                mse <= last + 1e-12,
                "mse rose from {last} to {mse} at {rounds} rounds"
            );
            last = mse;
        }
    }
}
