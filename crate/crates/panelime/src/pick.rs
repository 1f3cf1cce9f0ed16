//! Global summaries from many local explanations: a weight matrix W, the
//! per-feature global importance I, coverage of an instance set, greedy
//! submodular pick, and top-k selection-frequency tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lime::Explanation;

/// How a feature counts as "touched" by an explanation. The printed
/// coverage definition tests strict positivity, but negative local weights
/// are meaningful contributions, so absolute is the default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    #[default]
    Abs,
    StrictPositive,
}

impl CoverageMode {
    fn touches(&self, weight: f64) -> bool {
        match self {
            CoverageMode::Abs => weight != 0.0,
            CoverageMode::StrictPositive => weight > 0.0,
        }
    }
}

/// Instances-by-features matrix of local explanation weights; row i is the
/// dense weight vector of explanation i.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightMatrix {
    instance_ids: Vec<usize>,
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl WeightMatrix {
    pub fn new(
        instance_ids: Vec<usize>,
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if rows.len() != instance_ids.len() {
            return Err(Error::invalid("one row per instance id required"));
        }
        if rows.iter().any(|r| r.len() != feature_names.len()) {
            return Err(Error::invalid("ragged weight matrix"));
        }
        Ok(WeightMatrix {
            instance_ids,
            feature_names,
            rows,
        })
    }

    /// Builds W from explanations produced against a model with
    /// `feature_names` features (zeros for unselected features).
    pub fn from_explanations(
        explanations: &[Explanation],
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let rows: Vec<Vec<f64>> = explanations
            .iter()
            .map(|e| e.dense_weights(feature_names.len()))
            .collect();
        let ids = explanations.iter().map(|e| e.instance_id).collect();
        WeightMatrix::new(ids, feature_names, rows)
    }

    pub fn n_instances(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn instance_ids(&self) -> &[usize] {
        &self.instance_ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row_of(&self, instance_id: usize) -> Result<&[f64]> {
        let idx = self
            .instance_ids
            .iter()
            .position(|&id| id == instance_id)
            .ok_or_else(|| Error::invalid(format!("unknown instance id {instance_id}")))?;
        Ok(&self.rows[idx])
    }
}

/// Per-feature global prominence aggregated over all local explanations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalImportance {
    values: Vec<f64>,
}

impl GlobalImportance {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        GlobalImportance { values }
    }
}

/// `I_j = sqrt(sum_i |W_ij|)`, the usual tabular aggregation.
pub fn global_importance(w: &WeightMatrix) -> GlobalImportance {
    let mut values = vec![0.0; w.n_features()];
    for row in &w.rows {
        for (acc, v) in values.iter_mut().zip(row) {
            *acc += v.abs();
        }
    }
    for v in &mut values {
        *v = v.sqrt();
    }
    GlobalImportance { values }
}

/// Total importance of the features touched by at least one explanation in
/// `v`: `sum_j 1[exists i in v: touches(W_ij)] * I_j`.
pub fn coverage(
    v: &[usize],
    w: &WeightMatrix,
    importance: &GlobalImportance,
    mode: CoverageMode,
) -> Result<f64> {
    if importance.values.len() != w.n_features() {
        return Err(Error::invalid("importance width does not match W"));
    }
    let rows: Vec<&[f64]> = v
        .iter()
        .map(|&id| w.row_of(id))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for j in 0..w.n_features() {
        if rows.iter().any(|row| mode.touches(row[j])) {
            total += importance.values[j];
        }
    }
    Ok(total)
}

/// Greedy maximization of coverage under a budget of B instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PickSelection {
    /// Chosen instance ids, in pick order.
    pub selected: Vec<usize>,
    pub budget: usize,
    pub coverage: f64,
    pub mode: CoverageMode,
}

/// Repeatedly adds the instance with the largest marginal coverage gain
/// (ties broken by lowest instance id) until B instances are chosen or no
/// positive gain remains.
pub fn greedy_pick(
    w: &WeightMatrix,
    importance: &GlobalImportance,
    budget: usize,
    mode: CoverageMode,
) -> Result<PickSelection> {
    if budget == 0 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    if importance.values.len() != w.n_features() {
        return Err(Error::invalid("importance width does not match W"));
    }
    let mut covered = vec![false; w.n_features()];
    let mut selected = Vec::new();
    let mut remaining: Vec<usize> = (0..w.n_instances()).collect();
    let mut total = 0.0;

    // candidates scanned in ascending id order so the first maximum is the
    // lowest id
    remaining.sort_by_key(|&idx| w.instance_ids[idx]);

    while selected.len() < budget && !remaining.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (slot, &idx) in remaining.iter().enumerate() {
            let gain: f64 = w.rows[idx]
                .iter()
                .enumerate()
                .filter(|&(j, &v)| !covered[j] && mode.touches(v))
                .map(|(j, _)| importance.values[j])
                .sum();
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((slot, gain));
            }
        }
        let (slot, gain) = best.expect("remaining nonempty");
        if gain <= 0.0 {
            break;
        }
        let idx = remaining.remove(slot);
        for (j, &v) in w.rows[idx].iter().enumerate() {
            if mode.touches(v) {
                covered[j] = true;
            }
        }
        total += gain;
        selected.push(w.instance_ids[idx]);
    }

    Ok(PickSelection {
        selected,
        budget,
        coverage: total,
        mode,
    })
}

/// How often each feature appears among an explanation's `top_k` features
/// by absolute weight, sorted by count descending (name ascending on ties).
pub fn selection_frequency(
    picks: &[Explanation],
    top_k: usize,
) -> Result<Vec<(String, usize)>> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for exp in picks {
        if exp.features.is_empty() {
            return Err(Error::invalid(format!(
                "explanation for instance {} selected no features",
                exp.instance_id
            )));
        }
        let mut ranked: Vec<_> = exp.features.iter().collect();
        ranked.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()).then(a.index.cmp(&b.index)));
        for feature in ranked.into_iter().take(top_k) {
            *counts.entry(feature.name.clone()).or_insert(0) += 1;
        }
    }
    let mut table: Vec<(String, usize)> = counts.into_iter().collect();
    table.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(table)
}
