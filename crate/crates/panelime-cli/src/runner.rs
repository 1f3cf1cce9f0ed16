//! Stage implementations. Each stage reads its inputs either from the
//! original dataset or from artifacts persisted by earlier stages in the
//! run directory, so any stage can be re-run without recomputing upstream.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use panelime::eval::lime_vs_random_experiment;
use panelime::ice::{feature_grid, ice_curves, slope_rank, IceCurve};
use panelime::impute::impute_table;
use panelime::lime::{explain_all, ExplainedFeature, Explanation, FeatureStats, LimeConfig};
use panelime::models::{budgeted_search, Predictor};
use panelime::pick::{
    global_importance, greedy_pick, selection_frequency, PickSelection, WeightMatrix,
};
use panelime::seed;
use panelime::table::{
    self, diff_all, diff_target_lag_features, encode_entities, encode_entities_with, split,
    DataTable, EntityCodebook, SplitSpec,
};

use crate::config::{fnv64, PipelineConfig, ReformatStrategy};
use crate::svg;
use crate::CliError;

const MANIFEST: &str = "run_manifest.json";
const PROVENANCE: &str = "rows_provenance.json";

#[derive(Debug, Default, Serialize, Deserialize)]
struct StageRecord {
    artifacts: Vec<String>,
    notes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    tool_version: String,
    master_seed: u64,
    config_hash: String,
    input_path: String,
    input_hash: String,
    config: PipelineConfig,
    stages: BTreeMap<String, StageRecord>,
}

/// Per-instance explanation plus the panel metadata needed to read it.
#[derive(Debug, Serialize, Deserialize)]
pub struct ExplainedInstance {
    pub instance_id: usize,
    pub entity: String,
    pub time: f64,
    pub target: f64,
    pub intercept: f64,
    pub local_fit: Option<f64>,
    pub features: Vec<ExplainedFeature>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExplanationsArtifact {
    pub feature_names: Vec<String>,
    pub scope: String,
    pub lime: LimeConfig,
    pub instances: Vec<ExplainedInstance>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PickArtifact {
    selection: PickSelection,
    top_k: usize,
    frequency: Vec<FrequencyEntry>,
    instances: Vec<PickedInstance>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrequencyEntry {
    feature: String,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PickedInstance {
    instance_id: usize,
    entity: String,
    time: f64,
    target: f64,
}

pub struct Runner {
    config: PipelineConfig,
    run_dir: PathBuf,
    verbose: bool,
}

impl Runner {
    pub fn new(config: PipelineConfig, verbose: bool) -> Result<Self, CliError> {
        config.validate()?;
        let run_dir = config.run_dir();
        std::fs::create_dir_all(&run_dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", run_dir.display())))?;
        Ok(Runner {
            config,
            run_dir,
            verbose,
        })
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    fn announce(&self, path: &Path) {
        println!("wrote {}", path.display());
    }

    fn info(&self, msg: &str) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Runtime(format!("serialize {name}: {e}")))?;
        text.push('\n');
        std::fs::write(&path, text)
            .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))?;
        self.announce(&path);
        Ok(path)
    }

    fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T, CliError> {
        let path = self.path(name);
        let text = std::fs::read_to_string(&path).map_err(|_| {
            CliError::MissingArtifact(format!(
                "{} not found; run the upstream stage first",
                path.display()
            ))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Runtime(format!("parse {}: {e}", path.display())))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        std::fs::write(&path, text)
            .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))?;
        self.announce(&path);
        Ok(path)
    }

    fn write_table(&self, name: &str, table: &DataTable) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        table
            .to_csv_path(&path)
            .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))?;
        self.announce(&path);
        Ok(path)
    }

    fn record_stage(&self, name: &str, artifacts: &[PathBuf], notes: Vec<String>) -> Result<(), CliError> {
        let manifest_path = self.path(MANIFEST);
        let mut manifest = if manifest_path.exists() {
            self.read_json::<RunManifest>(MANIFEST)?
        } else {
            RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                master_seed: self.config.seed,
                config_hash: self.config.upstream_hash(),
                input_path: self.config.data.path.clone(),
                input_hash: hash_file(Path::new(&self.config.data.path)).unwrap_or_default(),
                config: self.config.clone(),
                stages: BTreeMap::new(),
            }
        };
        let record = StageRecord {
            artifacts: artifacts
                .iter()
                .map(|p| {
                    p.file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default()
                })
                .collect(),
            notes,
        };
        manifest.stages.insert(name.to_string(), record);
        self.write_json(MANIFEST, &manifest)?;
        Ok(())
    }

    fn provenance(&self) -> BTreeMap<String, Vec<f64>> {
        self.read_json::<BTreeMap<String, Vec<f64>>>(PROVENANCE)
            .unwrap_or_default()
    }

    fn store_provenance(&self, updates: &[(&str, Vec<f64>)]) -> Result<PathBuf, CliError> {
        let mut map = self.provenance();
        for (key, times) in updates {
            map.insert(key.to_string(), times.clone());
        }
        self.write_json(PROVENANCE, &map)
    }

    fn load_panel(&self, path: &str) -> Result<DataTable, CliError> {
        let schema = self.config.schema();
        let table = match &self.config.data.rename_map {
            Some(renames_path) => {
                let renames = table::load_rename_map(renames_path)?;
                table::load_csv_with_renames(path, &schema, &renames)?
            }
            None => table::load_csv(path, &schema)?,
        };
        Ok(table)
    }

    /// Reloads a persisted frame, restores entity codes from the codebook,
    /// and reattaches original row times from the provenance sidecar.
    fn load_frame(&self, name: &str, provenance_key: &str) -> Result<DataTable, CliError> {
        let path = self.path(name);
        if !path.exists() {
            return Err(CliError::MissingArtifact(format!(
                "{} not found; run the upstream stage first",
                path.display()
            )));
        }
        let frame = table::load_frame_csv(&path, &self.config.schema())?;
        let codebook: EntityCodebook = self.read_json("codebook.json")?;
        let encoded = encode_entities_with(&frame, &codebook)?;
        let provenance = self.provenance();
        match provenance.get(provenance_key) {
            Some(times) if times.len() == encoded.n_rows() => {
                Ok(encoded.with_row_times(times.clone())?)
            }
            _ => Ok(encoded),
        }
    }

    // ---- stages ------------------------------------------------------

    pub fn stage_impute(&self) -> Result<(), CliError> {
        let table = self.load_panel(&self.config.data.path)?;
        let policy = self
            .config
            .imputation_policy(seed::derive_labeled(self.config.seed, "impute"))?;
        let (imputed, report) = impute_table(&table, &policy)?;
        let csv = self.write_table("imputed.csv", &imputed)?;
        let json = self.write_json("impute_report.json", &report)?;
        let notes = vec![
            format!("rows imputed {} / skipped {}", report.rows_imputed, report.rows_skipped),
            format!("cells filled {}", report.cells_filled),
        ];
        self.record_stage("impute", &[csv, json], notes)
    }

    pub fn stage_reformat(&self, direct_input: bool) -> Result<(), CliError> {
        let table = if direct_input {
            self.load_panel(&self.config.data.path)?
        } else {
            let path = self.path("imputed.csv");
            if !path.exists() {
                return Err(CliError::MissingArtifact(format!(
                    "{} not found; run `impute` first or pass --input",
                    path.display()
                )));
            }
            self.load_panel(&path.to_string_lossy())?
        };
        let (reformatted, summary) = match self.config.reformat_strategy()? {
            ReformatStrategy::DiffAll => diff_all(&table)?,
            ReformatStrategy::DiffTargetLag => diff_target_lag_features(&table)?,
        };
        let csv = self.write_table("reformatted.csv", &reformatted)?;
        let json = self.write_json("reformat_summary.json", &summary)?;
        let prov = self.store_provenance(&[("reformatted", reformatted.row_times().to_vec())])?;
        let notes = vec![
            format!("{} rows in, {} rows out", summary.input_rows, summary.output_rows),
            format!("single-row entities skipped: {}", summary.single_row_entities),
            format!(
                "rows dropped for missing target diff: {}",
                summary.rows_dropped_missing_target
            ),
        ];
        self.record_stage("reformat", &[csv, json, prov], notes)
    }

    pub fn stage_train(&self) -> Result<(), CliError> {
        let path = self.path("reformatted.csv");
        if !path.exists() {
            return Err(CliError::MissingArtifact(format!(
                "{} not found; run `reformat` first",
                path.display()
            )));
        }
        let frame = table::load_frame_csv(&path, &self.config.schema())?;
        let provenance = self.provenance();
        let frame = match provenance.get("reformatted") {
            Some(times) if times.len() == frame.n_rows() => frame.with_row_times(times.clone())?,
            _ => frame,
        };
        let (encoded, codebook) = encode_entities(&frame);
        let codebook_path = self.write_json("codebook.json", &codebook)?;

        let split_spec = SplitSpec {
            train_fraction: self.config.split.train_fraction,
            seed: seed::derive_labeled(self.config.seed, "split"),
        };
        let (train, test) = split(&encoded, &split_spec)?;
        let train_csv = self.write_table("train.csv", &train)?;
        let test_csv = self.write_table("test.csv", &test)?;
        self.store_provenance(&[
            ("train", train.row_times().to_vec()),
            ("test", test.row_times().to_vec()),
        ])?;

        let (train_complete, dropped) = train.drop_rows_with_missing();
        if train_complete.n_rows() < 2 {
            return Err(CliError::Runtime(format!(
                "only {} complete training rows; cannot train",
                train_complete.n_rows()
            )));
        }
        let search_config = self
            .config
            .search_config(seed::derive_labeled(self.config.seed, "train"))?;
        let (model, report) = budgeted_search(&train_complete, &search_config)?;
        for warning in model.warnings() {
            self.info(&format!("train: {warning}"));
        }
        let stats = FeatureStats::from_table(&train_complete)?;

        let model_path = self.write_text("model.json", &(model.to_json()? + "\n"))?;
        let report_path = self.write_json("search_report.json", &report)?;
        let stats_path = self.write_json("stats.json", &stats)?;

        let best = &report.trials[report.best_index];
        let notes = vec![
            format!("train rows {} (dropped {} incomplete)", train_complete.n_rows(), dropped),
            format!("test rows {}", test.n_rows()),
            format!(
                "best trial {}: {} (validation score {:.6})",
                report.best_index,
                best.family.as_str(),
                best.validation_score
            ),
        ];
        self.record_stage(
            "train",
            &[codebook_path, train_csv, test_csv, model_path, report_path, stats_path],
            notes,
        )
    }

    fn load_model(&self) -> Result<Predictor, CliError> {
        let path = self.path("model.json");
        let text = std::fs::read_to_string(&path).map_err(|_| {
            CliError::MissingArtifact(format!(
                "{} not found; run `train` first",
                path.display()
            ))
        })?;
        Ok(Predictor::from_json(&text)?)
    }

    /// Instance table for explain/ice: the test split, falling back to the
    /// full reformatted frame when the test split is empty (tiny datasets).
    fn instance_frame(&self, scope: &str) -> Result<(DataTable, String), CliError> {
        let test_first = scope != "all";
        if test_first {
            let test = self.load_frame("test.csv", "test")?;
            if test.n_rows() > 0 || scope == "test" {
                return Ok((test, "test".into()));
            }
        }
        Ok((self.load_frame("reformatted.csv", "reformatted")?, "all".into()))
    }

    pub fn stage_explain(&self, with_svg: bool) -> Result<(), CliError> {
        let model = self.load_model()?;
        let stats: FeatureStats = self.read_json("stats.json")?;
        let (frame, scope) = self.instance_frame(&self.config.explain.scope)?;
        let (complete, dropped) = frame.drop_rows_with_missing();
        if complete.n_rows() == 0 {
            return Err(CliError::Runtime(
                "no complete rows available to explain".into(),
            ));
        }
        let cap = self.config.explain.max_instances.min(complete.n_rows());
        let rows: Vec<usize> = (0..cap).collect();
        let capped = complete.select_rows(&rows);
        let (x, y, names) = capped.to_xy()?;
        check_features(&model, &names)?;

        let lime_config = self
            .config
            .lime_config(seed::derive_labeled(self.config.seed, "explain"));
        let explanations = explain_all(&model, &x, &stats, &lime_config)?;

        let instances: Vec<ExplainedInstance> = explanations
            .iter()
            .map(|exp| ExplainedInstance {
                instance_id: exp.instance_id,
                entity: capped.entity_label(exp.instance_id).to_string(),
                time: capped.row_time(exp.instance_id),
                target: y[exp.instance_id],
                intercept: exp.intercept,
                local_fit: exp.local_fit,
                features: exp.features.clone(),
            })
            .collect();
        let artifact = ExplanationsArtifact {
            feature_names: names,
            scope: scope.clone(),
            lime: lime_config,
            instances,
        };
        let mut artifacts = vec![self.write_json("explanations.json", &artifact)?];
        if with_svg {
            for (exp, inst) in explanations.iter().zip(&artifact.instances) {
                let title = format!(
                    "{} {} (target change {:+.4})",
                    inst.entity, inst.time, inst.target
                );
                let name = format!("explanation_{:04}.svg", exp.instance_id);
                artifacts.push(self.write_text(&name, &svg::explanation_bars(exp, &title))?);
            }
        }
        let notes = vec![
            format!("scope {scope}, {} instances explained", artifact.instances.len()),
            format!("incomplete rows dropped: {dropped}"),
        ];
        self.record_stage("explain", &artifacts, notes)
    }

    pub fn stage_pick(&self) -> Result<(), CliError> {
        let artifact: ExplanationsArtifact = self.read_json("explanations.json")?;
        let explanations: Vec<Explanation> = artifact
            .instances
            .iter()
            .map(|inst| Explanation {
                instance_id: inst.instance_id,
                intercept: inst.intercept,
                local_fit: inst.local_fit,
                features: inst.features.clone(),
                config: artifact.lime.clone(),
            })
            .collect();
        let w = WeightMatrix::from_explanations(&explanations, artifact.feature_names.clone())?;
        let importance = global_importance(&w);
        let mode = self.config.coverage_mode()?;
        let selection = greedy_pick(&w, &importance, self.config.pick.budget, mode)?;

        let by_id: BTreeMap<usize, &ExplainedInstance> = artifact
            .instances
            .iter()
            .map(|inst| (inst.instance_id, inst))
            .collect();
        let picked: Vec<&Explanation> = selection
            .selected
            .iter()
            .map(|id| {
                explanations
                    .iter()
                    .find(|e| e.instance_id == *id)
                    .expect("picked id exists")
            })
            .collect();
        let picked_owned: Vec<Explanation> = picked.iter().map(|e| (*e).clone()).collect();
        let frequency = selection_frequency(&picked_owned, self.config.pick.top_k)?;

        let pick_artifact = PickArtifact {
            selection: selection.clone(),
            top_k: self.config.pick.top_k,
            frequency: frequency
                .iter()
                .map(|(feature, count)| FrequencyEntry {
                    feature: feature.clone(),
                    count: *count,
                })
                .collect(),
            instances: selection
                .selected
                .iter()
                .map(|id| {
                    let inst = by_id[id];
                    PickedInstance {
                        instance_id: inst.instance_id,
                        entity: inst.entity.clone(),
                        time: inst.time,
                        target: inst.target,
                    }
                })
                .collect(),
        };

        let mut freq_csv = String::from("feature,count\n");
        for (feature, count) in &frequency {
            freq_csv.push_str(&format!("{feature},{count}\n"));
        }

        let artifacts = vec![
            self.write_json("weight_matrix.json", &w)?,
            self.write_json("pick.json", &pick_artifact)?,
            self.write_text("frequency_table.csv", &freq_csv)?,
        ];
        let notes = vec![format!(
            "picked {} of {} instances, coverage {:.6}",
            selection.selected.len(),
            w.n_instances(),
            selection.coverage
        )];
        self.record_stage("pick", &artifacts, notes)
    }

    pub fn stage_ice(&self, features: &[String], with_svg: bool) -> Result<(), CliError> {
        let model = self.load_model()?;
        let train = self.load_frame("train.csv", "train")?;
        let (train_complete, _) = train.drop_rows_with_missing();
        let (instances_frame, scope) = self.instance_frame("auto")?;
        let (complete, _) = instances_frame.drop_rows_with_missing();
        if complete.n_rows() == 0 || train_complete.n_rows() == 0 {
            return Err(CliError::Runtime("no complete rows for curves".into()));
        }
        let cap = self.config.ice.max_instances.min(complete.n_rows());
        let capped = complete.select_rows(&(0..cap).collect::<Vec<_>>());
        let (x_inst, _, _) = capped.to_xy()?;
        let (x_train, _, feature_names) = train_complete.to_xy()?;

        let wanted: Vec<usize> = if features.is_empty() {
            (0..feature_names.len()).collect()
        } else {
            features
                .iter()
                .map(|name| {
                    feature_names
                        .iter()
                        .position(|n| n == name)
                        .ok_or_else(|| CliError::Config(format!("unknown feature {name:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?
        };

        let mut artifacts = Vec::new();
        let mut notes = vec![format!("scope {scope}, {} instances", cap)];
        let mut curves: Vec<IceCurve> = Vec::new();
        for &feature in &wanted {
            let values: Vec<f64> = x_train.iter().map(|row| row[feature]).collect();
            let grid = match feature_grid(&values, self.config.ice.grid_points) {
                Ok(grid) => grid,
                Err(_) => {
                    notes.push(format!(
                        "skipped {:?}: no spread in the training split",
                        feature_names[feature]
                    ));
                    continue;
                }
            };
            let curve = ice_curves(&model, &x_inst, feature, &grid)?;

            let mut csv = String::from("feature,grid_value,instance_id,prediction\n");
            for (i, row) in curve.instance_predictions.iter().enumerate() {
                for (g, pred) in curve.grid.iter().zip(row) {
                    csv.push_str(&format!("{},{g},{i},{pred}\n", curve.feature_name));
                }
            }
            let base = format!("ice_{:03}_{}", feature, sanitize(&curve.feature_name));
            artifacts.push(self.write_text(&format!("{base}.csv"), &csv)?);
            if with_svg {
                artifacts.push(self.write_text(&format!("{base}.svg"), &svg::ice_plot(&curve))?);
            }
            curves.push(curve);
        }
        if curves.is_empty() {
            return Err(CliError::Runtime("every requested feature was skipped".into()));
        }

        let ranking = slope_rank(&curves)?;
        let mut csv = String::from("rank,feature,slope_score\n");
        for (rank, entry) in ranking.iter().enumerate() {
            csv.push_str(&format!("{},{},{}\n", rank + 1, entry.feature_name, entry.score));
        }
        artifacts.push(self.write_text("slope_ranking.csv", &csv)?);
        notes.push(format!("top slope feature: {}", ranking[0].feature_name));
        self.record_stage("ice", &artifacts, notes)
    }

    pub fn stage_eval(&self, with_svg: bool) -> Result<(), CliError> {
        let model = self.load_model()?;
        let stats: FeatureStats = self.read_json("stats.json")?;
        let test = self.load_frame("test.csv", "test")?;
        let (complete, dropped) = test.drop_rows_with_missing();
        let feature_names: Vec<String> = test
            .feature_columns()
            .iter()
            .map(|&c| test.column_names()[c].clone())
            .collect();
        check_features(&model, &feature_names)?;

        let mut notes = vec![format!(
            "test rows {} (dropped {} incomplete)",
            complete.n_rows(),
            dropped
        )];
        let effective_k = self.config.eval.k.min(model.n_features());
        if effective_k != self.config.eval.k {
            notes.push(format!(
                "eval.k clamped from {} to the model's {} features",
                self.config.eval.k, effective_k
            ));
        }
        let lime_config = self
            .config
            .lime_config(seed::derive_labeled(self.config.seed, "eval-lime"));
        let report = lime_vs_random_experiment(
            &model,
            &complete,
            &stats,
            effective_k,
            &lime_config,
            self.config.eval.runs,
            seed::derive_labeled(self.config.seed, "eval"),
            self.config.eval.max_instances,
        )?;
        let mut artifacts = vec![self.write_json("eval_report.json", &report)?];
        if with_svg {
            artifacts.push(self.write_text("eval_report.svg", &svg::eval_bars(&report))?);
        }
        notes.push(format!(
            "mean guided R2 {:.6}, mean random R2 {:.6}, p {:.6}",
            report.mean_r2_lime(),
            report.mean_r2_random(),
            report.p_value
        ));
        self.record_stage("eval", &artifacts, notes)
    }

    pub fn stage_pipeline(&self, with_svg: bool) -> Result<(), CliError> {
        self.stage_impute()?;
        self.stage_reformat(false)?;
        self.stage_train()?;
        self.stage_explain(with_svg)?;

        // the evaluation experiment needs a usable test split; tiny panels
        // (like the bundled snippet) may not have one, which is not an error
        let test = self.load_frame("test.csv", "test")?;
        let (complete, _) = test.drop_rows_with_missing();
        if complete.n_rows() < 2 {
            let note = format!(
                "eval skipped: test split has {} complete rows (need 2)",
                complete.n_rows()
            );
            self.info(&note);
            return self.record_stage("eval", &[], vec![note]);
        }
        match self.stage_eval(with_svg) {
            Ok(()) => Ok(()),
            Err(CliError::Runtime(msg)) => {
                let note = format!("eval skipped: {msg}");
                self.info(&note);
                self.record_stage("eval", &[], vec![note])
            }
            Err(other) => Err(other),
        }
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// The persisted model must have been trained on the same feature layout
/// as the frame being explained or evaluated.
fn check_features(model: &Predictor, names: &[String]) -> Result<(), CliError> {
    if model.feature_names() != names {
        return Err(CliError::Runtime(format!(
            "feature columns {names:?} do not match the persisted model's {:?}",
            model.feature_names()
        )));
    }
    Ok(())
}

fn hash_file(path: &Path) -> Option<String> {
    std::fs::read(path).ok().map(|bytes| format!("{:016x}", fnv64(&bytes)))
}
