//! Budget-limited random hyperparameter search over the model families.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::r_squared;
use crate::models::{fit_matrix, Hyperparameters, ModelFamily, Predictor};
use crate::table::DataTable;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchBudget {
    /// Fixed number of trials; deterministic and parallel.
    Trials(usize),
    /// Wall-clock budget in seconds; trials run sequentially until the
    /// deadline passes (the trial in flight always completes).
    Seconds(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMetric {
    #[default]
    RSquared,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    pub budget: SearchBudget,
    pub families: Vec<ModelFamily>,
    #[serde(default)]
    pub metric: SearchMetric,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: SearchBudget::Trials(25),
            families: ModelFamily::ALL.to_vec(),
            metric: SearchMetric::RSquared,
            seed: 0,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub family: ModelFamily,
    pub hyperparameters: Hyperparameters,
    pub validation_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchReport {
    pub trials: Vec<TrialRecord>,
    pub best_index: usize,
}

#[derive(Clone)]
struct TrialPlan {
    family: ModelFamily,
    hyperparameters: Hyperparameters,
    seed: u64,
}

fn sample_plan(families: &[ModelFamily], rng: &mut ChaCha8Rng) -> TrialPlan {
    let family = families[rng.random_range(0..families.len())];
    let mut hp = Hyperparameters::new();
    match family {
        ModelFamily::RandomForest | ModelFamily::ExtraTrees => {
            hp.insert("n_trees".into(), rng.random_range(50..=500) as f64);
            hp.insert("max_depth".into(), rng.random_range(2..=12) as f64);
        }
        ModelFamily::GradientBoosting => {
            hp.insert("n_trees".into(), rng.random_range(50..=500) as f64);
            hp.insert("max_depth".into(), rng.random_range(2..=6) as f64);
            hp.insert("learning_rate".into(), rng.random_range(0.01..=0.3));
            hp.insert("subsample".into(), rng.random_range(0.5..=1.0));
        }
        ModelFamily::Linear => {}
    }
    TrialPlan {
        family,
        hyperparameters: hp,
        seed: rng.random(),
    }
}

struct SearchData<'a> {
    fit_x: Vec<Vec<f64>>,
    fit_y: Vec<f64>,
    val_x: Vec<Vec<f64>>,
    val_y: Vec<f64>,
    names: &'a [String],
}

impl SearchData<'_> {
    /// Validation R^2, falling back to the training score when the holdout
    /// part is too small or degenerate to score. Unscorable trials get 0.
    fn score(&self, model: &Predictor) -> f64 {
        let val = model
            .predict(&self.val_x)
            .ok()
            .and_then(|preds| r_squared(&self.val_y, &preds).ok());
        if let Some(s) = val {
            return s;
        }
        model
            .predict(&self.fit_x)
            .ok()
            .and_then(|preds| r_squared(&self.fit_y, &preds).ok())
            .unwrap_or(0.0)
    }

    fn run(&self, plan: &TrialPlan) -> Result<TrialRecord> {
        let model = fit_matrix(
            plan.family,
            &self.fit_x,
            &self.fit_y,
            self.names.to_vec(),
            &plan.hyperparameters,
            plan.seed,
        )?;
        Ok(TrialRecord {
            family: plan.family,
            hyperparameters: plan.hyperparameters.clone(),
            validation_score: self.score(&model),
        })
    }
}

/// Random search over family x hyperparameter space within the budget.
/// Returns the best trial's model refit on the full training data, plus a
/// report of every trial. Ties go to the earliest trial.
pub fn budgeted_search_matrix(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    config: &SearchConfig,
) -> Result<(Predictor, SearchReport)> {
    if config.families.is_empty() {
        return Err(Error::invalid("no candidate families"));
    }
    if !(config.validation_fraction > 0.0 && config.validation_fraction < 1.0) {
        return Err(Error::invalid("validation_fraction must lie in (0, 1)"));
    }
    match config.budget {
        SearchBudget::Trials(0) => return Err(Error::invalid("budget must be positive")),
        SearchBudget::Seconds(s) if !(s > 0.0) => {
            return Err(Error::invalid("budget must be positive"))
        }
        _ => {}
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("search needs at least 2 rows"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let n_val = ((config.validation_fraction * n as f64).round() as usize).min(n.saturating_sub(2));
    let (val_rows, fit_rows) = order.split_at(n_val);
    let gather = |rows: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            rows.iter().map(|&r| x[r].clone()).collect(),
            rows.iter().map(|&r| y[r]).collect(),
        )
    };
    let (val_x, val_y) = gather(val_rows);
    let (fit_x, fit_y) = gather(fit_rows);
    let data = SearchData {
        fit_x,
        fit_y,
        val_x,
        val_y,
        names: feature_names,
    };

    let (trials, plans): (Vec<TrialRecord>, Vec<TrialPlan>) = match config.budget {
        SearchBudget::Trials(count) => {
            let plans: Vec<TrialPlan> = (0..count).map(|_| sample_plan(&config.families, &mut rng)).collect();
            let trials = plans
                .par_iter()
                .map(|plan| data.run(plan))
                .collect::<Result<Vec<_>>>()?;
            (trials, plans)
        }
        SearchBudget::Seconds(limit) => {
            let start = Instant::now();
            let mut trials = Vec::new();
            let mut plans = Vec::new();
            while start.elapsed().as_secs_f64() < limit {
                let plan = sample_plan(&config.families, &mut rng);
                trials.push(data.run(&plan)?);
                plans.push(plan);
            }
            (trials, plans)
        }
    };

    if trials.is_empty() {
        return Err(Error::SearchFailed(
            "budget exhausted before any trial completed".into(),
        ));
    }

    let best_index = trials
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.validation_score
                .total_cmp(&b.validation_score)
                .then(ib.cmp(ia)) // earlier trial wins ties
        })
        .map(|(i, _)| i)
        .expect("nonempty");

    let best_plan = &plans[best_index];
    let model = fit_matrix(
        best_plan.family,
        x,
        y,
        feature_names.to_vec(),
        &best_plan.hyperparameters,
        best_plan.seed,
    )?;
    Ok((model, SearchReport { trials, best_index }))
}

/// Table-level wrapper over [`budgeted_search_matrix`].
pub fn budgeted_search(train: &DataTable, config: &SearchConfig) -> Result<(Predictor, SearchReport)> {
    let (x, y, names) = train.to_xy()?;
    budgeted_search_matrix(&x, &y, &names, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(314);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] - 2.0 * r[1] + 0.5).collect();
        let names = vec!["x1".into(), "x2".into(), "x3".into()];
        (x, y, names)
    }

    #[test]
    fn single_trial_budget_selects_it() {
        let (x, y, names) = synthetic(60);
        let config = SearchConfig {
            budget: SearchBudget::Trials(1),
            seed: 5,
            ..SearchConfig::default()
        };
        let (_, report) = budgeted_search_matrix(&x, &y, &names, &config).unwrap();
        assert_eq!(report.trials.len(), 1);
        assert_eq!(report.best_index, 0);
    }

    #[test]
    fn best_index_is_the_maximum_score() {
        let (x, y, names) = synthetic(80);
        let config = SearchConfig {
            budget: SearchBudget::Trials(8),
            seed: 2,
            ..SearchConfig::default()
        };
        let (_, report) = budgeted_search_matrix(&x, &y, &names, &config).unwrap();
        let best = report.trials[report.best_index].validation_score;
        for t in &report.trials {
            assert!(t.validation_score <= best);
        }
    }

    #[test]
    fn different_seeds_still_give_well_formed_reports() {
        let (x, y, names) = synthetic(60);
        for seed in [1, 2] {
            let config = SearchConfig {
                budget: SearchBudget::Trials(4),
                seed,
                ..SearchConfig::default()
            };
            let (model, report) = budgeted_search_matrix(&x, &y, &names, &config).unwrap();
            assert_eq!(report.trials.len(), 4);
            assert!(report.best_index < 4);
            assert_eq!(model.n_features(), 3);
        }
    }

    #[test]
    fn zero_budget_is_rejected() {
        let (x, y, names) = synthetic(10);
        let config = SearchConfig {
            budget: SearchBudget::Trials(0),
            ..SearchConfig::default()
        };
        assert!(budgeted_search_matrix(&x, &y, &names, &config).is_err());
    }

    #[test]
    fn wall_clock_budget_completes_at_least_one_trial() {
        let (x, y, names) = synthetic(40);
        let config = SearchConfig {
            budget: SearchBudget::Seconds(0.05),
            seed: 9,
            ..SearchConfig::default()
        };
        let (_, report) = budgeted_search_matrix(&x, &y, &names, &config).unwrap();
        assert!(!report.trials.is_empty());
    }
}
