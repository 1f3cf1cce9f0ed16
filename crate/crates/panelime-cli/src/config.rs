//! One TOML config file drives the whole pipeline; command-line flags
//! override individual keys. Every random stage derives its seed from the
//! single master seed, and the heavyweight artifacts live in a directory
//! keyed by a hash of the config sections that produced them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use panelime::impute::{ImputationMethod, ImputationPolicy};
use panelime::models::{ModelFamily, SearchBudget, SearchConfig, SearchMetric};
use panelime::pick::CoverageMode;
use panelime::table::Schema;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub impute: ImputeSection,
    pub reformat: ReformatSection,
    pub split: SplitSection,
    pub train: TrainSection,
    pub lime: LimeSection,
    pub explain: ExplainSection,
    pub pick: PickSection,
    pub ice: IceSection,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataSection::default(),
            impute: ImputeSection::default(),
            reformat: ReformatSection::default(),
            split: SplitSection::default(),
            train: TrainSection::default(),
            lime: LimeSection::default(),
            explain: ExplainSection::default(),
            pick: PickSection::default(),
            ice: IceSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: String,
    pub entity: String,
    pub time: String,
    pub target: String,
    pub categorical: Vec<String>,
    pub rename_map: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeSection {
    pub method: String,
    pub theta: f64,
    pub k: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub residual_noise: bool,
}

impl Default for ImputeSection {
    fn default() -> Self {
        ImputeSection {
            method: "linear".into(),
            theta: 0.25,
            k: 5,
            max_iterations: 20,
            tolerance: 1e-6,
            residual_noise: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReformatSection {
    /// `diff_all` or `diff_target_lag`.
    pub strategy: String,
}

impl Default for ReformatSection {
    fn default() -> Self {
        ReformatSection {
            strategy: "diff_all".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { train_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Trial-count budget (deterministic); ignored when budget_seconds set.
    pub budget_trials: usize,
    /// Optional wall-clock budget in seconds.
    pub budget_seconds: Option<f64>,
    pub families: Vec<String>,
    pub validation_fraction: f64,
    pub metric: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            budget_trials: 25,
            budget_seconds: None,
            families: ModelFamily::ALL.iter().map(|f| f.as_str().to_string()).collect(),
            validation_fraction: 0.2,
            metric: "r_squared".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeSection {
    pub kernel_width: f64,
    pub n_samples: usize,
    pub k_features: usize,
    pub ridge_lambda: f64,
    pub standardize: bool,
}

impl Default for LimeSection {
    fn default() -> Self {
        LimeSection {
            kernel_width: 1.0,
            n_samples: 5000,
            k_features: 10,
            ridge_lambda: 1.0,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    /// `auto` explains the test split, falling back to every reformatted
    /// row when the test split is empty; `test` and `all` force a scope.
    pub scope: String,
    pub max_instances: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            scope: "auto".into(),
            max_instances: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PickSection {
    pub budget: usize,
    pub top_k: usize,
    /// `abs` or `strict_positive`.
    pub coverage_mode: String,
}

impl Default for PickSection {
    fn default() -> Self {
        PickSection {
            budget: 20,
            top_k: 5,
            coverage_mode: "abs".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IceSection {
    pub grid_points: usize,
    pub max_instances: usize,
}

impl Default for IceSection {
    fn default() -> Self {
        IceSection {
            grid_points: 20,
            max_instances: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k: usize,
    pub runs: usize,
    pub max_instances: Option<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            k: 10,
            runs: 5,
            max_instances: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("cannot parse config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(format!("serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.path.is_empty() {
            return Err(CliError::Config(
                "data.path is required (config key or --input)".into(),
            ));
        }
        for (field, value) in [
            ("data.entity", &self.data.entity),
            ("data.time", &self.data.time),
            ("data.target", &self.data.target),
        ] {
            if value.is_empty() {
                return Err(CliError::Config(format!("{field} is required")));
            }
        }
        self.imputation_policy(0)
            .and_then(|p| p.validate().map_err(|e| CliError::Config(e.to_string())))?;
        self.reformat_strategy()?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(CliError::Config("split.train_fraction must lie in (0, 1)".into()));
        }
        self.search_config(0)?;
        self.lime_config(0)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        match self.explain.scope.as_str() {
            "auto" | "test" | "all" => {}
            other => {
                return Err(CliError::Config(format!(
                    "explain.scope must be auto, test, or all; got {other:?}"
                )))
            }
        }
        self.coverage_mode()?;
        if self.eval.runs < 2 {
            return Err(CliError::Config("eval.runs must be at least 2".into()));
        }
        if self.eval.k == 0 {
            return Err(CliError::Config("eval.k must be at least 1".into()));
        }
        if self.ice.grid_points < 2 {
            return Err(CliError::Config("ice.grid_points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        Schema {
            entity: self.data.entity.clone(),
            time: self.data.time.clone(),
            target: self.data.target.clone(),
            categorical: self.data.categorical.clone(),
        }
    }

    pub fn imputation_policy(&self, seed: u64) -> Result<ImputationPolicy, CliError> {
        let method = match self.impute.method.as_str() {
            "linear" => ImputationMethod::Linear,
            "knn" => ImputationMethod::Knn,
            "iterative" => ImputationMethod::Iterative,
            other => {
                return Err(CliError::Config(format!(
                    "impute.method must be linear, knn, or iterative; got {other:?}"
                )))
            }
        };
        Ok(ImputationPolicy {
            method,
            theta: self.impute.theta,
            k: self.impute.k,
            max_iterations: self.impute.max_iterations,
            tolerance: self.impute.tolerance,
            seed,
            residual_noise: self.impute.residual_noise,
        })
    }

    pub fn reformat_strategy(&self) -> Result<ReformatStrategy, CliError> {
        match self.reformat.strategy.as_str() {
            "diff_all" => Ok(ReformatStrategy::DiffAll),
            "diff_target_lag" => Ok(ReformatStrategy::DiffTargetLag),
            other => Err(CliError::Config(format!(
                "reformat.strategy must be diff_all or diff_target_lag; got {other:?}"
            ))),
        }
    }

    pub fn search_config(&self, seed: u64) -> Result<SearchConfig, CliError> {
        if self.train.metric != "r_squared" {
            return Err(CliError::Config(format!(
                "train.metric must be r_squared; got {:?}",
                self.train.metric
            )));
        }
        let families = self
            .train
            .families
            .iter()
            .map(|name| name.parse::<ModelFamily>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if families.is_empty() {
            return Err(CliError::Config("train.families must not be empty".into()));
        }
        let budget = match self.train.budget_seconds {
            Some(seconds) if seconds > 0.0 => SearchBudget::Seconds(seconds),
            Some(_) => return Err(CliError::Config("train.budget_seconds must be positive".into())),
            None if self.train.budget_trials > 0 => SearchBudget::Trials(self.train.budget_trials),
            None => return Err(CliError::Config("train.budget_trials must be positive".into())),
        };
        Ok(SearchConfig {
            budget,
            families,
            metric: SearchMetric::RSquared,
            seed,
            validation_fraction: self.train.validation_fraction,
        })
    }

    pub fn lime_config(&self, seed: u64) -> panelime::lime::LimeConfig {
        panelime::lime::LimeConfig {
            kernel_width: self.lime.kernel_width,
            n_samples: self.lime.n_samples,
            k_features: self.lime.k_features,
            ridge_lambda: self.lime.ridge_lambda,
            seed,
            standardize: self.lime.standardize,
        }
    }

    pub fn coverage_mode(&self) -> Result<CoverageMode, CliError> {
        match self.pick.coverage_mode.as_str() {
            "abs" => Ok(CoverageMode::Abs),
            "strict_positive" => Ok(CoverageMode::StrictPositive),
            other => Err(CliError::Config(format!(
                "pick.coverage_mode must be abs or strict_positive; got {other:?}"
            ))),
        }
    }

    /// Hash over the config sections that shape the persisted artifacts:
    /// data through train, plus the master seed. Downstream knobs (lime,
    /// explain, pick, ice, eval) are recorded inside their artifacts
    /// instead, so tweaking them reuses the same run directory.
    pub fn upstream_hash(&self) -> String {
        #[derive(Serialize)]
        struct Upstream<'a> {
            seed: u64,
            data: &'a DataSection,
            impute: &'a ImputeSection,
            reformat: &'a ReformatSection,
            split: &'a SplitSection,
            train: &'a TrainSection,
        }
        let canonical = serde_json::to_string(&Upstream {
            seed: self.seed,
            data: &self.data,
            impute: &self.impute,
            reformat: &self.reformat,
            split: &self.split,
            train: &self.train,
        })
        .expect("config serializes");
        format!("{:016x}", fnv64(canonical.as_bytes()))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("run-{}", self.upstream_hash()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReformatStrategy {
    DiffAll,
    DiffTargetLag,
}

pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let mut config = PipelineConfig::default();
        config.data.path = "data.csv".into();
        config.data.entity = "country".into();
        config.data.time = "year".into();
        config.data.target = "score".into();
        config.seed = 99;
        let text = config.to_toml().unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.to_toml().unwrap(), text);
        assert_eq!(back.upstream_hash(), config.upstream_hash());
    }

    #[test]
    fn downstream_knobs_do_not_move_the_run_dir() {
        let mut a = PipelineConfig::default();
        a.data.path = "d.csv".into();
        let mut b = a.clone();
        b.eval.k = 3;
        b.lime.n_samples = 100;
        assert_eq!(a.upstream_hash(), b.upstream_hash());
        let mut c = a.clone();
        c.impute.theta = 0.5;
        assert_ne!(a.upstream_hash(), c.upstream_hash());
        let mut d = a.clone();
        d.seed = 1;
        assert_ne!(a.upstream_hash(), d.upstream_hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<PipelineConfig>("sedd = 3\n");
        assert!(err.is_err());
    }
}
