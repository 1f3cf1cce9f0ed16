//! Local surrogate explanations: perturb a neighborhood around one
//! instance, weight the perturbations by an exponential proximity kernel,
//! and fit a sparse weighted linear model to the black box's predictions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::Predictor;
use crate::seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimeConfig {
    /// Width of the proximity kernel; smaller means a tighter neighborhood.
    pub kernel_width: f64,
    /// Perturbed samples per explanation (the instance itself is row 0).
    pub n_samples: usize,
    /// Sparsity cap: at most this many features carry nonzero weight.
    pub k_features: usize,
    /// Ridge regularizer for both surrogate fits.
    pub ridge_lambda: f64,
    pub seed: u64,
    /// Z-score distances by the training stds. Turning this off reproduces
    /// setups tuned with unstandardized distances (very large widths).
    #[serde(default = "default_standardize")]
    pub standardize: bool,
}

fn default_standardize() -> bool {
    true
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            kernel_width: 1.0,
            n_samples: 5000,
            k_features: 10,
            ridge_lambda: 1.0,
            seed: 0,
            standardize: true,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_width > 0.0) {
            return Err(Error::invalid("kernel_width must be positive"));
        }
        if self.k_features == 0 {
            return Err(Error::invalid("k_features must be at least 1"));
        }
        if self.n_samples < self.k_features + 1 {
            return Err(Error::invalid(
                "n_samples must be at least k_features + 1",
            ));
        }
        if self.ridge_lambda < 0.0 {
            return Err(Error::invalid("ridge_lambda must be nonnegative"));
        }
        Ok(())
    }
}

/// Per-feature mean and standard deviation of the training split; drives
/// both neighborhood sampling and distance standardization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureStats {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl FeatureStats {
    pub fn from_matrix(x: &[Vec<f64>]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("cannot compute stats of an empty matrix"));
        }
        let p = x[0].len();
        let n = x.len();
        let mut means = vec![0.0; p];
        for row in x {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut stds = vec![0.0; p];
        if n > 1 {
            for row in x {
                for ((s, v), m) in stds.iter_mut().zip(row).zip(&means) {
                    *s += (v - m) * (v - m);
                }
            }
            for s in &mut stds {
                *s = (*s / (n - 1) as f64).sqrt();
            }
        }
        Ok(FeatureStats { means, stds })
    }

    /// Stats over a table's feature columns (everything but the target).
    pub fn from_table(train: &crate::table::DataTable) -> Result<Self> {
        let (x, _, _) = train.to_xy()?;
        Self::from_matrix(&x)
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.means[j]
    }

    pub fn std(&self, j: usize) -> f64 {
        self.stds[j]
    }

    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.stds.len()).filter(|&j| self.stds[j] == 0.0).collect()
    }
}

/// Draws `n` rows feature-wise from Gaussian(mean_j, std_j). Row 0 is the
/// instance itself; features with zero training std are held at the
/// instance's value.
pub fn sample_neighborhood(
    x: &[f64],
    stats: &FeatureStats,
    n: usize,
    seed_value: u64,
) -> Result<Vec<Vec<f64>>> {
    if n < 1 {
        return Err(Error::invalid("need at least one sample"));
    }
    if x.len() != stats.n_features() {
        return Err(Error::invalid("instance width does not match stats"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed_value);
    let mut samples = Vec::with_capacity(n);
    samples.push(x.to_vec());
    for _ in 1..n {
        let row: Vec<f64> = (0..x.len())
            .map(|j| {
                let std = stats.stds[j];
                if std == 0.0 {
                    x[j]
                } else {
                    let draw: f64 = rng.sample(StandardNormal);
                    stats.means[j] + std * draw
                }
            })
            .collect();
        samples.push(row);
    }
    Ok(samples)
}

/// Proximity weight `exp(-d^2 / width^2)` where `d` is the Euclidean
/// distance between `x` and `z`, z-scored when `stats` is given. Features
/// with zero std contribute nothing to a standardized distance.
pub fn kernel_weight(x: &[f64], z: &[f64], width: f64, stats: Option<&FeatureStats>) -> f64 {
    debug_assert_eq!(x.len(), z.len());
    let mut d2 = 0.0;
    for j in 0..x.len() {
        let scale = match stats {
            Some(s) if s.stds[j] == 0.0 => continue,
            Some(s) => s.stds[j],
            None => 1.0,
        };
        let d = (x[j] - z[j]) / scale;
        d2 += d * d;
    }
    (-d2 / (width * width)).exp()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainedFeature {
    pub index: usize,
    pub name: String,
    pub weight: f64,
}

/// One instance's local surrogate: intercept, at most `k_features` feature
/// weights ordered by importance, and the surrogate's weighted fit score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Explanation {
    pub instance_id: usize,
    pub intercept: f64,
    /// Weighted R^2 of the surrogate against the black box over the
    /// neighborhood; `None` when the black box is locally constant.
    pub local_fit: Option<f64>,
    pub features: Vec<ExplainedFeature>,
    pub config: LimeConfig,
}

impl Explanation {
    /// Dense weight vector over `n_features` (zeros off the selection).
    pub fn dense_weights(&self, n_features: usize) -> Vec<f64> {
        let mut w = vec![0.0; n_features];
        for f in &self.features {
            w[f.index] = f.weight;
        }
        w
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.index).collect()
    }

    /// Indices of the `k` largest features by absolute weight.
    pub fn top_k_indices(&self, k: usize) -> Vec<usize> {
        let mut ranked: Vec<&ExplainedFeature> = self.features.iter().collect();
        ranked.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()).then(a.index.cmp(&b.index)));
        ranked.into_iter().take(k).map(|f| f.index).collect()
    }
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let wsum: f64 = weights.iter().sum();
    values
        .iter()
        .zip(weights)
        .map(|(v, w)| v * w)
        .sum::<f64>()
        / wsum
}

/// Two-stage weighted sparse fit: ridge over all features, rank by
/// |coefficient| * sample std, then refit on the top-K features only.
pub fn fit_local_model(
    samples: &[Vec<f64>],
    weights: &[f64],
    black_box_preds: &[f64],
    config: &LimeConfig,
) -> Result<Explanation> {
    config.validate()?;
    if samples.len() != weights.len() || samples.len() != black_box_preds.len() {
        return Err(Error::invalid(
            "samples, weights, and predictions must have equal lengths",
        ));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::invalid("kernel weights must be finite and nonnegative"));
    }
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    if positive < config.k_features + 1 {
        return Err(Error::KernelTooNarrow {
            width: config.kernel_width,
        });
    }

    // normalize to mean 1 so the ridge penalty is invariant to a global
    // rescaling of the kernel weights
    let scale = samples.len() as f64 / weights.iter().sum::<f64>();
    let weights: Vec<f64> = weights.iter().map(|w| w * scale).collect();

    let stage1 = linalg::fit_linear(samples, black_box_preds, Some(&weights), config.ridge_lambda)
        .ok_or_else(|| Error::invalid("surrogate fit failed"))?;

    let stats = FeatureStats::from_matrix(samples)?;
    let mut ranked: Vec<(usize, f64)> = stage1
        .coefficients
        .iter()
        .enumerate()
        .map(|(j, c)| (j, c.abs() * stats.stds[j]))
        .filter(|&(_, score)| score > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(config.k_features);
    let selected: Vec<usize> = ranked.iter().map(|&(j, _)| j).collect();

    let reduced: Vec<Vec<f64>> = samples
        .iter()
        .map(|row| selected.iter().map(|&j| row[j]).collect())
        .collect();
    let stage2 = linalg::fit_linear(&reduced, black_box_preds, Some(&weights), config.ridge_lambda)
        .ok_or_else(|| Error::invalid("surrogate refit failed"))?;

    // weighted R^2 of the surrogate against the black box
    let f_bar = weighted_mean(black_box_preds, &weights);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for ((row, &f), &w) in reduced.iter().zip(black_box_preds).zip(&weights) {
        let g = stage2.predict_one(row);
        ss_res += w * (f - g) * (f - g);
        ss_tot += w * (f - f_bar) * (f - f_bar);
    }
    let local_fit = if ss_tot > 1e-300 {
        Some(1.0 - ss_res / ss_tot)
    } else {
        None
    };

    let features = selected
        .iter()
        .zip(&stage2.coefficients)
        .map(|(&index, &weight)| ExplainedFeature {
            index,
            name: format!("x{index}"),
            weight,
        })
        .collect();

    Ok(Explanation {
        instance_id: 0,
        intercept: stage2.intercept,
        local_fit,
        features,
        config: config.clone(),
    })
}

/// Full pipeline for one instance: sample a neighborhood, query the black
/// box, weight by proximity, fit the sparse surrogate. Deterministic for a
/// fixed config seed.
pub fn explain(
    model: &Predictor,
    x: &[f64],
    stats: &FeatureStats,
    config: &LimeConfig,
) -> Result<Explanation> {
    config.validate()?;
    if x.len() != model.n_features() {
        return Err(Error::invalid(format!(
            "instance width {} does not match the model's {} features",
            x.len(),
            model.n_features()
        )));
    }
    let samples = sample_neighborhood(x, stats, config.n_samples, config.seed)?;
    let preds = model.predict(&samples)?;
    let weights: Vec<f64> = samples
        .iter()
        .map(|z| {
            kernel_weight(
                x,
                z,
                config.kernel_width,
                config.standardize.then_some(stats),
            )
        })
        .collect();
    let mut explanation = fit_local_model(&samples, &weights, &preds, config)?;
    for feature in &mut explanation.features {
        feature.name = model.feature_names()[feature.index].clone();
    }
    Ok(explanation)
}

/// Explains many instances in parallel. Each instance gets an independent
/// random stream derived from the config seed and its row index, and its
/// `instance_id` set to that index.
pub fn explain_all(
    model: &Predictor,
    rows: &[Vec<f64>],
    stats: &FeatureStats,
    config: &LimeConfig,
) -> Result<Vec<Explanation>> {
    rows.par_iter()
        .enumerate()
        .map(|(i, row)| {
            let per_instance = LimeConfig {
                seed: seed::derive(config.seed, i as u64),
                ..config.clone()
            };
            let mut exp = explain(model, row, stats, &per_instance)?;
            exp.instance_id = i;
            Ok(exp)
        })
        .collect()
}
