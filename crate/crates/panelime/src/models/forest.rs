//! Bagged and randomized tree ensembles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::tree::{RegressionTree, Splitter, TreeParams};

#[derive(Debug, Clone)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features considered per node.
    pub mtry_fraction: f64,
    /// Bootstrap rows per tree (bagging); extra trees leave this off.
    pub bootstrap: bool,
    pub splitter: Splitter,
}

impl ForestParams {
    pub fn bagged(n_trees: usize, max_depth: usize) -> Self {
        ForestParams {
            n_trees,
            max_depth,
            min_samples_split: 4,
            min_samples_leaf: 2,
            mtry_fraction: 1.0 / 3.0,
            bootstrap: true,
            splitter: Splitter::Best,
        }
    }

    pub fn randomized(n_trees: usize, max_depth: usize) -> Self {
        ForestParams {
            n_trees,
            max_depth,
            min_samples_split: 4,
            min_samples_leaf: 2,
            mtry_fraction: 1.0,
            bootstrap: false,
            splitter: Splitter::Random,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &ForestParams, seed: u64) -> Self {
        let n_rows = x.len();
        let n_features = x[0].len();
        let mtry = ((n_features as f64 * params.mtry_fraction).ceil() as usize).clamp(1, n_features);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_split: params.min_samples_split,
            min_samples_leaf: params.min_samples_leaf,
            mtry,
            splitter: params.splitter,
        };

        let mut seeder = ChaCha8Rng::seed_from_u64(seed);
        let tree_seeds: Vec<u64> = (0..params.n_trees).map(|_| seeder.random()).collect();

        let trees: Vec<RegressionTree> = tree_seeds
            .par_iter()
            .map(|&tree_seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n_rows).map(|_| rng.random_range(0..n_rows)).collect()
                } else {
                    (0..n_rows).collect()
                };
                RegressionTree::fit(x, y, &rows, &tree_params, &mut rng)
            })
            .collect();
        Forest { trees }
    }

    pub fn predict_one(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_one(row)).sum();
        sum / self.trees.len() as f64
    }
}
