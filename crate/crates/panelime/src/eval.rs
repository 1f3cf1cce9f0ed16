//! Quantitative checks of explanation quality: the coefficient of
//! determination, column masking, the LIME-vs-random masking experiment,
//! and a one-sided paired t-test over its runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lime::{self, FeatureStats, LimeConfig};
use crate::models::Predictor;
use crate::seed;
use crate::stats;
use crate::table::DataTable;

/// Standard coefficient of determination:
/// `1 - sum (y - yhat)^2 / sum (y - mean(y))^2`.
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::invalid("observed and predicted lengths differ"));
    }
    if y.len() < 2 {
        return Err(Error::invalid("r_squared needs at least 2 observations"));
    }
    let mean = stats::mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance("observed values are constant".into()));
    }
    let ss_res: f64 = y
        .iter()
        .zip(yhat)
        .map(|(v, p)| (v - p) * (v - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Zeroes every column outside `keep`. In differenced space zero means
/// "no year-over-year change", so this is the neutral masking value.
pub fn mask_to_columns(rows: &[Vec<f64>], keep: &[usize]) -> Result<Vec<Vec<f64>>> {
    if keep.is_empty() {
        return Err(Error::invalid("keep set must not be empty"));
    }
    let width = rows.first().map_or(0, Vec::len);
    if let Some(&bad) = keep.iter().find(|&&c| c >= width) {
        return Err(Error::invalid(format!(
            "keep column {bad} out of range for width {width}"
        )));
    }
    let mut keep_mask = vec![false; width];
    for &c in keep {
        keep_mask[c] = true;
    }
    Ok(rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(c, &v)| if keep_mask[c] { v } else { 0.0 })
                .collect()
        })
        .collect())
}

/// One-sided paired t-test with alternative `mean(a - b) > 0`.
/// Returns `(t, p)` with `p = 1 - StudentT_CDF(t, n - 1)`.
///
/// Degenerate case `sd(d) = 0`: p is 0 when the mean difference is
/// positive, 1 when negative, and 0.5 when every difference is zero.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::invalid("paired samples must have equal lengths"));
    }
    if a.len() < 2 {
        return Err(Error::invalid("paired t-test needs at least 2 pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = stats::mean(&d);
    let sd = stats::sample_std(&d);
    if sd == 0.0 {
        return Ok(if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else if mean < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        });
    }
    let n = d.len() as f64;
    let t = mean / (sd / n.sqrt());
    let p = 1.0 - stats::student_t_cdf(t, n - 1.0);
    Ok((t, p))
}

/// R^2 pair from one run of the masking experiment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RunScores {
    pub r2_lime: f64,
    pub r2_random: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: Vec<RunScores>,
    pub r2_full_model: f64,
    pub k_columns: usize,
    /// Instances actually evaluated per run.
    pub n_instances: usize,
    /// Instances dropped because their explanation failed.
    pub skipped_instances: usize,
    pub t_statistic: f64,
    pub p_value: f64,
    pub seed: u64,
}

impl EvalReport {
    pub fn mean_r2_lime(&self) -> f64 {
        self.runs.iter().map(|r| r.r2_lime).sum::<f64>() / self.runs.len() as f64
    }

    pub fn mean_r2_random(&self) -> f64 {
        self.runs.iter().map(|r| r.r2_random).sum::<f64>() / self.runs.len() as f64
    }

    pub fn mean_uplift(&self) -> f64 {
        self.mean_r2_lime() - self.mean_r2_random()
    }
}

/// Matrix-level masking experiment. Per run: explain each evaluated test
/// instance, keep its top-k features, zero the rest, predict, and pool into
/// one R^2; then draw k columns uniformly at random, mask every instance to
/// those, and score again. Runs are repeated `n_runs` times and compared
/// with the one-sided paired t-test.
#[allow(clippy::too_many_arguments)]
pub fn lime_vs_random_matrix(
    model: &Predictor,
    x_test: &[Vec<f64>],
    y_test: &[f64],
    stats: &FeatureStats,
    k: usize,
    lime_config: &LimeConfig,
    n_runs: usize,
    seed_value: u64,
    max_instances: Option<usize>,
) -> Result<EvalReport> {
    let n_features = model.n_features();
    if k == 0 || k > n_features {
        return Err(Error::invalid(format!(
            "k must lie in 1..={n_features}, got {k}"
        )));
    }
    if n_runs < 2 {
        return Err(Error::invalid("need at least 2 runs for the paired test"));
    }
    if x_test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let cap = max_instances.unwrap_or(usize::MAX).min(x_test.len());
    if cap < 2 {
        return Err(Error::invalid("need at least 2 evaluated instances"));
    }
    let eval_x = &x_test[..cap];
    let eval_y = &y_test[..cap];

    // the explanation's own sparsity cap realizes the top-k selection
    let base_config = LimeConfig {
        k_features: k,
        ..lime_config.clone()
    };

    let mut runs = Vec::with_capacity(n_runs);
    let mut skipped_total = 0usize;
    let mut kept_y: Vec<f64> = Vec::new();
    let mut kept_full_preds: Vec<f64> = Vec::new();

    for run in 0..n_runs {
        let run_seed = seed::derive(seed_value, run as u64);

        let mut lime_preds = Vec::with_capacity(cap);
        let mut used_rows: Vec<usize> = Vec::with_capacity(cap);
        for (i, row) in eval_x.iter().enumerate() {
            let config = LimeConfig {
                seed: seed::derive(run_seed, i as u64),
                ..base_config.clone()
            };
            match lime::explain(model, row, stats, &config) {
                Ok(exp) => {
                    let keep = if exp.features.is_empty() {
                        // a locally constant model: keep nothing but column 0
                        // so the mask call stays well-formed
                        vec![0]
                    } else {
                        exp.top_k_indices(k)
                    };
                    let masked = mask_to_columns(std::slice::from_ref(row), &keep)?;
                    lime_preds.push(model.predict_one(&masked[0]));
                    used_rows.push(i);
                }
                Err(_) => {
                    skipped_total += 1;
                }
            }
        }
        if used_rows.len() < 2 {
            return Err(Error::invalid(
                "fewer than 2 instances were explainable; cannot score the run",
            ));
        }
        let run_y: Vec<f64> = used_rows.iter().map(|&i| eval_y[i]).collect();
        let r2_lime = r_squared(&run_y, &lime_preds)?;

        // random baseline: one fresh column draw per run
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(run_seed, u64::MAX));
        let keep: Vec<usize> = rand::seq::index::sample(&mut rng, n_features, k).into_vec();
        let rows: Vec<Vec<f64>> = used_rows.iter().map(|&i| eval_x[i].clone()).collect();
        let masked = mask_to_columns(&rows, &keep)?;
        let random_preds = model.predict(&masked)?;
        let r2_random = r_squared(&run_y, &random_preds)?;

        runs.push(RunScores { r2_lime, r2_random });

        if run == 0 {
            kept_y = run_y;
            kept_full_preds = model.predict(&rows)?;
        }
    }

    let r2_full_model = r_squared(&kept_y, &kept_full_preds)?;
    let lime_scores: Vec<f64> = runs.iter().map(|r| r.r2_lime).collect();
    let random_scores: Vec<f64> = runs.iter().map(|r| r.r2_random).collect();
    let (t_statistic, p_value) = paired_t_test(&lime_scores, &random_scores)?;

    Ok(EvalReport {
        runs,
        r2_full_model,
        k_columns: k,
        n_instances: cap,
        skipped_instances: skipped_total,
        t_statistic,
        p_value,
        seed: seed_value,
    })
}

/// Table-level wrapper: evaluates on the test table's feature matrix.
#[allow(clippy::too_many_arguments)]
pub fn lime_vs_random_experiment(
    model: &Predictor,
    test: &DataTable,
    stats: &FeatureStats,
    k: usize,
    lime_config: &LimeConfig,
    n_runs: usize,
    seed_value: u64,
    max_instances: Option<usize>,
) -> Result<EvalReport> {
    let (x, y, _) = test.to_xy()?;
    lime_vs_random_matrix(
        model,
        &x,
        &y,
        stats,
        k,
        lime_config,
        n_runs,
        seed_value,
        max_instances,
    )
}
