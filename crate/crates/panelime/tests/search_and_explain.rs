//! Seeded end-to-end checks: hyperparameter search quality, the masking
//! experiment on a known ground truth, and agreement between pick-frequency
//! tables and ICE slope rankings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use panelime::eval::lime_vs_random_matrix;
use panelime::ice::{feature_grid, ice_curves, slope_rank};
use panelime::lime::{explain_all, FeatureStats, LimeConfig};
use panelime::models::{
    budgeted_search_matrix, fit_matrix, Hyperparameters, ModelFamily, Predictor, SearchBudget,
    SearchConfig,
};
use panelime::pick::{global_importance, greedy_pick, selection_frequency, CoverageMode, WeightMatrix};

fn gaussian_matrix(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

#[test]
fn budgeted_search_reaches_high_held_out_r2() {
    // y = 3 x1 - 2 x2 + noise(sigma = 0.1), 500 rows, 25 trials
    let p = 2;
    let x = gaussian_matrix(500, p, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let y: Vec<f64> = x
        .iter()
        .map(|r| 3.0 * r[0] - 2.0 * r[1] + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let (train_x, holdout_x) = x.split_at(400);
    let (train_y, holdout_y) = y.split_at(400);

    let config = SearchConfig {
        budget: SearchBudget::Trials(25),
        seed: 21,
        ..SearchConfig::default()
    };
    let (model, report) = budgeted_search_matrix(train_x, train_y, &names(p), &config).unwrap();
    assert_eq!(report.trials.len(), 25);

    let preds = model.predict(holdout_x).unwrap();
    let r2 = panelime::eval::r_squared(holdout_y, &preds).unwrap();
    assert!(r2 >= 0.9, "held-out R^2 {r2} below 0.9 (family {:?})", model.family());
}

#[test]
fn masking_experiment_separates_lime_from_random() {
    // 3 informative features of 20; exact linear black box so the test is
    // about the harness, not model quality
    let p = 20;
    let mut coefs = vec![0.0; p];
    coefs[0] = 3.0;
    coefs[1] = -2.0;
    coefs[2] = 1.0;
    let model = Predictor::from_linear(0.0, coefs, names(p));

    let x = gaussian_matrix(120, p, 31);
    let y: Vec<f64> = x.iter().map(|r| model.predict_one(r)).collect();
    let stats = FeatureStats::from_matrix(&x).unwrap();
    let config = LimeConfig {
        n_samples: 600,
        kernel_width: 3.0,
        ..LimeConfig::default()
    };

    let report =
        lime_vs_random_matrix(&model, &x, &y, &stats, 3, &config, 5, 77, Some(40)).unwrap();
    assert!(
        report.mean_r2_lime() > report.mean_r2_random(),
        "lime {} vs random {}",
        report.mean_r2_lime(),
        report.mean_r2_random()
    );
    assert!(report.p_value < 0.05, "p = {}", report.p_value);
    // keeping the true support loses nothing, so LIME tracks the full model
    assert!(report.mean_r2_lime() <= report.r2_full_model + 0.02);
    assert_eq!(report.skipped_instances, 0);
}

#[test]
fn pick_frequency_and_ice_slopes_agree_on_a_linear_truth() {
    // ground truth y = 10 x0 + x1 with four idle features
    let p = 6;
    let x = gaussian_matrix(400, p, 41);
    let y: Vec<f64> = x.iter().map(|r| 10.0 * r[0] + r[1]).collect();
    let model = fit_matrix(
        ModelFamily::GradientBoosting,
        &x,
        &y,
        names(p),
        &Hyperparameters::new(),
        5,
    )
    .unwrap();
    let stats = FeatureStats::from_matrix(&x).unwrap();

    let config = LimeConfig {
        n_samples: 800,
        kernel_width: 3.0,
        k_features: 2,
        seed: 51,
        ..LimeConfig::default()
    };
    let explanations = explain_all(&model, &x[..60], &stats, &config).unwrap();
    let w = WeightMatrix::from_explanations(&explanations, model.feature_names().to_vec()).unwrap();
    let importance = global_importance(&w);
    let picked = greedy_pick(&w, &importance, 20, CoverageMode::Abs).unwrap();
    let picked_explanations: Vec<_> = picked
        .selected
        .iter()
        .map(|&id| explanations[id].clone())
        .collect();
    let table = selection_frequency(&picked_explanations, 5).unwrap();
    assert_eq!(table[0].0, "x0", "most frequent feature should be x0");

    // slope ranking over every feature must also put x0 on top, and the
    // frequent features must sit at or above the median slope score
    let curves: Vec<_> = (0..p)
        .map(|f| {
            let values: Vec<f64> = x.iter().map(|row| row[f]).collect();
            let grid = feature_grid(&values, 20).unwrap();
            ice_curves(&model, &x[..60], f, &grid).unwrap()
        })
        .collect();
    let ranking = slope_rank(&curves).unwrap();
    assert_eq!(ranking[0].feature, 0);

    let mut scores: Vec<f64> = ranking.iter().map(|e| e.score).collect();
    scores.sort_by(f64::total_cmp);
    let median = scores[scores.len() / 2];
    let by_feature: std::collections::HashMap<usize, f64> =
        ranking.iter().map(|e| (e.feature, e.score)).collect();
    for (name, _) in table.iter().take(2) {
        let feature: usize = name.trim_start_matches('x').parse().unwrap();
        assert!(
            by_feature[&feature] >= median,
            "frequently picked {name} scores under the median slope"
        );
    }
}
