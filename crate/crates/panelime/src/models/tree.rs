//! CART-style regression trees with variance-reduction splits. The same
//! structure backs bagged forests (best splits on bootstrap samples),
//! extra trees (random thresholds), and boosting (shallow best-split trees).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Splitter {
    /// Exhaustive best threshold per candidate feature.
    Best,
    /// One uniform-random threshold per candidate feature, best taken.
    Random,
}

#[derive(Debug, Clone)]
pub struct TreeParams {
    /// Depth 0 is a single leaf.
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Number of features drawn (without replacement) per node.
    pub mtry: usize,
    pub splitter: Splitter,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl RegressionTree {
    /// Fits on the rows listed in `rows` (duplicates allowed, as produced by
    /// bootstrap sampling).
    pub fn fit<R: Rng>(
        x: &[Vec<f64>],
        y: &[f64],
        rows: &[usize],
        params: &TreeParams,
        rng: &mut R,
    ) -> Self {
        debug_assert_eq!(x.len(), y.len());
        let mut tree = RegressionTree { nodes: Vec::new() };
        tree.grow(x, y, rows.to_vec(), 0, params, rng);
        tree
    }

    fn grow<R: Rng>(
        &mut self,
        x: &[Vec<f64>],
        y: &[f64],
        rows: Vec<usize>,
        depth: usize,
        params: &TreeParams,
        rng: &mut R,
    ) -> usize {
        let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
        let node_id = self.nodes.len();
        if depth >= params.max_depth
            || rows.len() < params.min_samples_split
            || rows.iter().all(|&r| y[r] == y[rows[0]])
        {
            self.nodes.push(Node::Leaf { value: mean });
            return node_id;
        }

        let n_features = x[0].len();
        let mut candidates: Vec<usize> = (0..n_features).collect();
        candidates.shuffle(rng);
        candidates.truncate(params.mtry.clamp(1, n_features));

        let mut best: Option<SplitChoice> = None;
        for &feature in &candidates {
            let choice = match params.splitter {
                Splitter::Best => best_threshold(x, y, &rows, feature, params.min_samples_leaf),
                Splitter::Random => {
                    random_threshold(x, y, &rows, feature, params.min_samples_leaf, rng)
                }
            };
            if let Some(c) = choice {
                if best.as_ref().is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }

        let Some(split) = best else {
            self.nodes.push(Node::Leaf { value: mean });
            return node_id;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| x[r][split.feature] <= split.threshold);
        // placeholder; children are appended next and then patched in
        self.nodes.push(Node::Leaf { value: mean });
        let left = self.grow(x, y, left_rows, depth + 1, params, rng);
        let right = self.grow(x, y, right_rows, depth + 1, params, rng);
        self.nodes[node_id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        node_id
    }

    pub fn predict_one(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    #[cfg(test)]
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Score of a split: the decrease in total squared error, up to constants;
/// maximizing `sum_l^2/n_l + sum_r^2/n_r` is equivalent.
fn split_score(sum_left: f64, n_left: usize, sum_right: f64, n_right: usize) -> f64 {
    sum_left * sum_left / n_left as f64 + sum_right * sum_right / n_right as f64
}

fn best_threshold(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<SplitChoice> {
    let mut pairs: Vec<(f64, f64)> = rows.iter().map(|&r| (x[r][feature], y[r])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let n = pairs.len();

    let mut best: Option<SplitChoice> = None;
    let mut left_sum = 0.0;
    for i in 0..n - 1 {
        left_sum += pairs[i].1;
        if pairs[i].0 == pairs[i + 1].0 {
            continue; // no threshold separates equal values
        }
        let n_left = i + 1;
        let n_right = n - n_left;
        if n_left < min_leaf || n_right < min_leaf {
            continue;
        }
        let score = split_score(left_sum, n_left, total - left_sum, n_right);
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(SplitChoice {
                feature,
                threshold: 0.5 * (pairs[i].0 + pairs[i + 1].0),
                score,
            });
        }
    }
    best
}

fn random_threshold<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
    rng: &mut R,
) -> Option<SplitChoice> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &r in rows {
        lo = lo.min(x[r][feature]);
        hi = hi.max(x[r][feature]);
    }
    if lo == hi {
        return None;
    }
    let threshold = rng.random_range(lo..hi);
    let mut left_sum = 0.0;
    let mut n_left = 0usize;
    let mut right_sum = 0.0;
    for &r in rows {
        if x[r][feature] <= threshold {
            left_sum += y[r];
            n_left += 1;
        } else {
            right_sum += y[r];
        }
    }
    let n_right = rows.len() - n_left;
    if n_left < min_leaf || n_right < min_leaf {
        return None;
    }
    Some(SplitChoice {
        feature,
        threshold,
        score: split_score(left_sum, n_left, right_sum, n_right),
    })
}
