//! Internal black-box regressors: tree ensembles and a linear baseline.
//! Every model is fit once, immutable afterwards, and prediction is a pure
//! function of the stored state.

mod boosting;
mod forest;
mod search;
mod tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::table::DataTable;

pub use boosting::{BoostParams, BoostedTrees};
pub use forest::{Forest, ForestParams};
pub use search::{
    budgeted_search, budgeted_search_matrix, SearchBudget, SearchConfig, SearchMetric,
    SearchReport, TrialRecord,
};
pub use tree::Splitter;

/// Hyperparameters travel as a plain name -> value map so they can be
/// sampled, serialized, and reported uniformly.
pub type Hyperparameters = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    RandomForest,
    ExtraTrees,
    GradientBoosting,
    Linear,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::RandomForest,
        ModelFamily::ExtraTrees,
        ModelFamily::GradientBoosting,
        ModelFamily::Linear,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelFamily::RandomForest => "random_forest",
            ModelFamily::ExtraTrees => "extra_trees",
            ModelFamily::GradientBoosting => "gradient_boosting",
            ModelFamily::Linear => "linear",
        }
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_forest" => Ok(ModelFamily::RandomForest),
            "extra_trees" => Ok(ModelFamily::ExtraTrees),
            "gradient_boosting" => Ok(ModelFamily::GradientBoosting),
            "linear" => Ok(ModelFamily::Linear),
            other => Err(Error::invalid(format!("unknown model family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum ModelState {
    Forest(Forest),
    Boosted(BoostedTrees),
    Linear { intercept: f64, coefficients: Vec<f64> },
    Constant { value: f64 },
}

/// An opaque fitted regressor. Downstream consumers only ever call
/// [`Predictor::predict`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Predictor {
    format_version: u32,
    family: ModelFamily,
    feature_names: Vec<String>,
    training_seed: u64,
    state: ModelState,
    #[serde(default)]
    warnings: Vec<String>,
}

const MODEL_FORMAT_VERSION: u32 = 1;

fn hp_get(hp: &Hyperparameters, key: &str, default: f64) -> f64 {
    hp.get(key).copied().unwrap_or(default)
}

const KNOWN_KEYS: [&str; 6] = [
    "n_trees",
    "max_depth",
    "learning_rate",
    "subsample",
    "min_samples_leaf",
    "mtry_fraction",
];

fn validate_keys(hp: &Hyperparameters) -> Result<()> {
    for key in hp.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::invalid(format!("unknown hyperparameter {key:?}")));
        }
    }
    Ok(())
}

/// Fits a regressor of the requested family on a dense matrix.
pub fn fit_matrix(
    family: ModelFamily,
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: Vec<String>,
    hyperparameters: &Hyperparameters,
    seed: u64,
) -> Result<Predictor> {
    validate_keys(hyperparameters)?;
    if x.len() != y.len() {
        return Err(Error::invalid("feature matrix and target length differ"));
    }
    if x.len() < 2 {
        return Err(Error::invalid(format!(
            "training needs at least 2 rows, got {}",
            x.len()
        )));
    }
    let width = feature_names.len();
    if x.iter().any(|row| row.len() != width) {
        return Err(Error::invalid("ragged feature matrix"));
    }

    let mut warnings = Vec::new();
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        warnings.push("target has zero variance; fitted a constant predictor".to_string());
        return Ok(Predictor {
            format_version: MODEL_FORMAT_VERSION,
            family,
            feature_names,
            training_seed: seed,
            state: ModelState::Constant { value: first },
            warnings,
        });
    }

    let n_trees = hp_get(hyperparameters, "n_trees", 200.0).round() as usize;
    let max_depth = hp_get(hyperparameters, "max_depth", 8.0).round() as usize;
    let min_leaf = hp_get(hyperparameters, "min_samples_leaf", 2.0).round() as usize;

    let state = match family {
        ModelFamily::RandomForest | ModelFamily::ExtraTrees => {
            let mut params = if family == ModelFamily::RandomForest {
                ForestParams::bagged(n_trees.max(1), max_depth)
            } else {
                ForestParams::randomized(n_trees.max(1), max_depth)
            };
            params.min_samples_leaf = min_leaf.max(1);
            params.min_samples_split = 2 * params.min_samples_leaf;
            if let Some(&f) = hyperparameters.get("mtry_fraction") {
                params.mtry_fraction = f.clamp(0.05, 1.0);
            }
            ModelState::Forest(Forest::fit(x, y, &params, seed))
        }
        ModelFamily::GradientBoosting => {
            let params = BoostParams {
                n_rounds: n_trees.max(1),
                max_depth: max_depth.clamp(1, 6),
                learning_rate: hp_get(hyperparameters, "learning_rate", 0.1),
                subsample: hp_get(hyperparameters, "subsample", 1.0).clamp(0.1, 1.0),
                min_samples_leaf: min_leaf.max(1),
            };
            ModelState::Boosted(BoostedTrees::fit(x, y, &params, seed))
        }
        ModelFamily::Linear => {
            let fit = linalg::fit_linear(x, y, None, 0.0)
                .ok_or_else(|| Error::invalid("linear fit failed"))?;
            if fit.ridge_fallback {
                warnings.push("singular design; linear fit used a small ridge term".to_string());
            }
            ModelState::Linear {
                intercept: fit.intercept,
                coefficients: fit.coefficients,
            }
        }
    };

    Ok(Predictor {
        format_version: MODEL_FORMAT_VERSION,
        family,
        feature_names,
        training_seed: seed,
        state,
        warnings,
    })
}

/// Fits on a [`DataTable`]; errors if any cell is missing.
pub fn fit(
    family: ModelFamily,
    train: &DataTable,
    hyperparameters: &Hyperparameters,
    seed: u64,
) -> Result<Predictor> {
    let (x, y, names) = train.to_xy()?;
    fit_matrix(family, &x, &y, names, hyperparameters, seed)
}

impl Predictor {
    /// Wraps a known linear function as a predictor. Handy as a transparent
    /// stand-in when ground truth must be exact.
    pub fn from_linear(intercept: f64, coefficients: Vec<f64>, feature_names: Vec<String>) -> Self {
        assert_eq!(coefficients.len(), feature_names.len());
        Predictor {
            format_version: MODEL_FORMAT_VERSION,
            family: ModelFamily::Linear,
            feature_names,
            training_seed: 0,
            state: ModelState::Linear {
                intercept,
                coefficients,
            },
            warnings: Vec::new(),
        }
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn training_seed(&self) -> u64 {
        self.training_seed
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn predict_one(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.feature_names.len());
        match &self.state {
            ModelState::Forest(f) => f.predict_one(row),
            ModelState::Boosted(b) => b.predict_one(row),
            ModelState::Linear {
                intercept,
                coefficients,
            } => {
                let mut acc = *intercept;
                for (c, v) in coefficients.iter().zip(row) {
                    acc += c * v;
                }
                acc
            }
            ModelState::Constant { value } => *value,
        }
    }

    /// One prediction per row; errors when a row width disagrees with the
    /// feature list fixed at fit time.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let width = self.feature_names.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::invalid(format!(
                    "row {i} has width {}, model expects {width}",
                    row.len()
                )));
            }
        }
        Ok(rows.iter().map(|r| self.predict_one(r)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("serialize model: {e}")))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: Predictor = serde_json::from_str(json)
            .map_err(|e| Error::invalid(format!("parse model: {e}")))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}
