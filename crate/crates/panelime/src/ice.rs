//! Individual conditional expectation curves and their partial-dependence
//! mean, plus range-based slope ranking of features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Predictor;

/// Per-instance model response as one feature sweeps a grid, all other
/// features held at the instance's values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IceCurve {
    pub feature: usize,
    pub feature_name: String,
    pub grid: Vec<f64>,
    /// `instance_predictions[i][g]` is instance i's prediction at grid g.
    pub instance_predictions: Vec<Vec<f64>>,
    /// Pointwise mean of the instance rows (the partial-dependence curve).
    pub pdp: Vec<f64>,
    /// Per-instance (max - min prediction) / (grid span).
    pub slope_scores: Vec<f64>,
    /// Mean of the per-instance slope scores.
    pub aggregate_slope: f64,
}

/// Evenly spaced grid between the 1st and 99th percentile of a value set.
pub fn feature_grid(values: &[f64], n_points: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot build a grid from no values"));
    }
    if n_points < 2 {
        return Err(Error::invalid("grid needs at least 2 points"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pct = |q: f64| -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    let lo = pct(0.01);
    let hi = pct(0.99);
    if !(hi > lo) {
        return Err(Error::invalid(
            "feature has no spread between the 1st and 99th percentiles",
        ));
    }
    let step = (hi - lo) / (n_points - 1) as f64;
    Ok((0..n_points).map(|i| lo + step * i as f64).collect())
}

/// Sweeps `feature` over `grid` for every instance and records the model's
/// predictions; the PDP row is the pointwise mean.
pub fn ice_curves(
    model: &Predictor,
    instances: &[Vec<f64>],
    feature: usize,
    grid: &[f64],
) -> Result<IceCurve> {
    if feature >= model.n_features() {
        return Err(Error::invalid(format!(
            "feature index {feature} out of range for {} features",
            model.n_features()
        )));
    }
    if grid.len() < 2 {
        return Err(Error::invalid("grid needs at least 2 points"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("grid must be strictly ascending"));
    }
    if instances.is_empty() {
        return Err(Error::invalid("need at least one instance"));
    }
    if instances.iter().any(|r| r.len() != model.n_features()) {
        return Err(Error::invalid("instance width does not match the model"));
    }

    let instance_predictions: Vec<Vec<f64>> = instances
        .par_iter()
        .map(|row| {
            let mut probe = row.clone();
            grid.iter()
                .map(|&g| {
                    probe[feature] = g;
                    model.predict_one(&probe)
                })
                .collect()
        })
        .collect();

    let n = instances.len() as f64;
    let pdp: Vec<f64> = (0..grid.len())
        .map(|g| instance_predictions.iter().map(|row| row[g]).sum::<f64>() / n)
        .collect();

    let span = grid[grid.len() - 1] - grid[0];
    let slope_scores: Vec<f64> = instance_predictions
        .iter()
        .map(|row| {
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo) / span
        })
        .collect();
    let aggregate_slope = slope_scores.iter().sum::<f64>() / slope_scores.len() as f64;

    Ok(IceCurve {
        feature,
        feature_name: model.feature_names()[feature].clone(),
        grid: grid.to_vec(),
        instance_predictions,
        pdp,
        slope_scores,
        aggregate_slope,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeRankEntry {
    pub feature: usize,
    pub feature_name: String,
    pub score: f64,
}

/// Ranks features by aggregate slope score, descending. All curves must
/// cover the same instances.
pub fn slope_rank(curves: &[IceCurve]) -> Result<Vec<SlopeRankEntry>> {
    if curves.is_empty() {
        return Err(Error::invalid("no curves to rank"));
    }
    let n_instances = curves[0].instance_predictions.len();
    for curve in curves {
        if curve.instance_predictions.len() != n_instances {
            return Err(Error::invalid("curves cover different instance sets"));
        }
        if curve.grid.len() < 2 || !(curve.grid[curve.grid.len() - 1] > curve.grid[0]) {
            return Err(Error::invalid("degenerate grid in a curve"));
        }
    }
    let mut entries: Vec<SlopeRankEntry> = curves
        .iter()
        .map(|c| SlopeRankEntry {
            feature: c.feature,
            feature_name: c.feature_name.clone(),
            score: c.aggregate_slope,
        })
        .collect();
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.feature.cmp(&b.feature)));
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn linear_model(coefs: Vec<f64>) -> Predictor {
        let names = (0..coefs.len()).map(|j| format!("x{j}")).collect();
        Predictor::from_linear(0.0, coefs, names)
    }

    #[test]
    fn linear_model_traces_its_line() {
        let model = linear_model(vec![2.0, 1.0]);
        let curve = ice_curves(&model, &[vec![9.0, 0.0]], 0, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(curve.instance_predictions[0], vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn ignored_feature_gives_flat_lines_and_zero_score() {
        let model = linear_model(vec![2.0, 0.0]);
        let curve = ice_curves(&model, &[vec![1.0, 5.0], vec![3.0, -2.0]], 1, &[0.0, 10.0]).unwrap();
        for row in &curve.instance_predictions {
            assert_eq!(row[0], row[1]);
        }
        assert_eq!(curve.aggregate_slope, 0.0);
    }

    #[test]
    fn pdp_is_the_pointwise_mean() {
        let model = linear_model(vec![2.0, 1.0]);
        let instances = vec![vec![0.0, 0.0], vec![0.0, 2.0]];
        let curve = ice_curves(&model, &instances, 0, &[0.0, 1.0, 2.0]).unwrap();
        // rows are [0,2,4] and [2,4,6]
        assert_eq!(curve.pdp, vec![1.0, 3.0, 5.0]);
        for g in 0..curve.grid.len() {
            let mean: f64 = curve
                .instance_predictions
                .iter()
                .map(|row| row[g])
                .sum::<f64>()
                / instances.len() as f64;
            assert_abs_diff_eq!(curve.pdp[g], mean, epsilon = 1e-15);
        }
    }

    #[test]
    fn slope_rank_orders_by_score() {
        let model = linear_model(vec![10.0, 1.0]);
        let instances = vec![vec![0.5, 0.5], vec![0.2, 0.8]];
        let grid = vec![0.0, 0.5, 1.0];
        let c0 = ice_curves(&model, &instances, 0, &grid).unwrap();
        let c1 = ice_curves(&model, &instances, 1, &grid).unwrap();
        let ranked = slope_rank(&[c1, c0]).unwrap();
        assert_eq!(ranked[0].feature, 0);
        assert_abs_diff_eq!(ranked[0].score / ranked[1].score, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn two_element_sort_is_descending() {
        let model = linear_model(vec![5.0, 0.1]);
        let instances = vec![vec![0.0, 0.0]];
        let grid = vec![0.0, 1.0];
        let a = ice_curves(&model, &instances, 0, &grid).unwrap();
        let b = ice_curves(&model, &instances, 1, &grid).unwrap();
        let ranked = slope_rank(&[b, a]).unwrap();
        assert!(ranked[0].score > ranked[1].score);
        assert_eq!(ranked[0].feature, 0);
    }

    #[test]
    fn rejects_bad_grids_and_indices() {
        let model = linear_model(vec![1.0]);
        let rows = vec![vec![0.0]];
        assert!(ice_curves(&model, &rows, 3, &[0.0, 1.0]).is_err());
        assert!(ice_curves(&model, &rows, 0, &[0.0]).is_err());
        assert!(ice_curves(&model, &rows, 0, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn percentile_grid_spans_the_bulk() {
        let values: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let grid = feature_grid(&values, 20).unwrap();
        assert_eq!(grid.len(), 20);
        assert!(grid[0] >= 0.0 && grid[0] <= 20.0);
        assert!(grid[19] >= 979.0 && grid[19] <= 999.0);
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn constant_feature_has_no_grid() {
        assert!(feature_grid(&[3.0; 50], 20).is_err());
    }
}
