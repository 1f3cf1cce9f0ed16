//! Iterative imputation: mean-initialize every gap, then cycle through the
//! imputable columns left to right, refitting a regression for each and
//! re-predicting its missing cells until the largest change in a sweep
//! falls under the tolerance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::impute::{ImputationPolicy, ImputationReport};
use crate::linalg;
use crate::table::DataTable;

pub(crate) fn impute_iterative_masked(
    table: &DataTable,
    policy: &ImputationPolicy,
    fill_mask: &[bool],
) -> Result<(DataTable, ImputationReport)> {
    policy.validate()?;
    let imputable = table.imputable_columns();
    let time_col = table.time_col();
    let n_rows = table.n_rows();
    let mut report = ImputationReport {
        iterations_used: Some(0),
        converged: Some(true),
        ..ImputationReport::default()
    };

    // working copy of the imputable block plus the time column as a predictor
    let mut active: Vec<usize> = Vec::new();
    let mut working: Vec<Vec<f64>> = vec![vec![0.0; n_rows]; table.n_cols()];
    let mut observed: Vec<Vec<bool>> = vec![vec![true; n_rows]; table.n_cols()];
    for &c in imputable.iter().chain(std::iter::once(&time_col)) {
        let column = table.column(c);
        let known: Vec<f64> = column.iter().flatten().copied().collect();
        let has_missing = known.len() < n_rows;
        if has_missing && known.len() < 2 {
            // cannot even mean-initialize reliably; leave the column alone
            report
                .unfillable_columns
                .push(table.column_names()[c].clone());
            continue;
        }
        let mean = if known.is_empty() {
            0.0
        } else {
            crate::stats::mean(&known)
        };
        for r in 0..n_rows {
            match column[r] {
                Some(v) => working[c][r] = v,
                None => {
                    working[c][r] = mean;
                    observed[c][r] = false;
                }
            }
        }
        if c != time_col && has_missing {
            active.push(c);
        }
    }
    report.unfillable_columns.sort();

    if active.is_empty() {
        return Ok((table.clone(), report));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let predictor_sets: Vec<Vec<usize>> = active
        .iter()
        .map(|&c| {
            let mut preds = vec![time_col];
            preds.extend(imputable.iter().copied().filter(|&p| {
                p != c && !report.unfillable_columns.contains(&table.column_names()[p])
            }));
            preds
        })
        .collect();

    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < policy.max_iterations {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for (slot, &c) in active.iter().enumerate() {
            let preds = &predictor_sets[slot];
            // fit on rows where this column is genuinely observed,
            // predictors taken from the current working values
            let mut x_train = Vec::new();
            let mut y_train = Vec::new();
            for r in 0..n_rows {
                if observed[c][r] {
                    x_train.push(preds.iter().map(|&p| working[p][r]).collect::<Vec<f64>>());
                    y_train.push(working[c][r]);
                }
            }
            let Some(model) = linalg::fit_linear(&x_train, &y_train, None, 0.0) else {
                continue;
            };
            if model.ridge_fallback {
                report.ridge_fallbacks += 1;
            }
            let residual_std = if policy.residual_noise {
                model.residual_std(&x_train, &y_train)
            } else {
                0.0
            };
            let noise = if residual_std > 0.0 {
                Some(Normal::new(0.0, residual_std).map_err(|e| {
                    Error::invalid(format!("residual distribution: {e}"))
                })?)
            } else {
                None
            };
            for r in 0..n_rows {
                if observed[c][r] {
                    continue;
                }
                let xs: Vec<f64> = preds.iter().map(|&p| working[p][r]).collect();
                let mut value = model.predict_one(&xs);
                if let Some(normal) = &noise {
                    value += normal.sample(&mut rng);
                }
                max_change = max_change.max((value - working[c][r]).abs());
                working[c][r] = value;
            }
        }
        if max_change < policy.tolerance {
            converged = true;
            break;
        }
    }

    report.iterations_used = Some(sweeps);
    report.converged = Some(converged);

    let mut columns: Vec<Vec<Option<f64>>> =
        (0..table.n_cols()).map(|c| table.column(c).to_vec()).collect();
    for &c in &active {
        for r in 0..n_rows {
            if !observed[c][r] && fill_mask[r] {
                columns[c][r] = Some(working[c][r]);
                report.cells_filled += 1;
            }
        }
    }
    Ok((table.with_columns(columns), report))
}

/// Iterative imputation over the whole table, gated by the policy threshold
/// exactly like [`crate::impute::impute_table`].
pub fn impute_iterative(
    table: &DataTable,
    policy: &ImputationPolicy,
) -> Result<(DataTable, ImputationReport)> {
    let mask = super::qualifying_rows(table, policy.theta);
    let rows_imputed = mask.iter().filter(|&&q| q).count();
    let (out, mut report) = impute_iterative_masked(table, policy, &mask)?;
    report.rows_imputed = rows_imputed;
    report.rows_skipped = table.n_rows() - rows_imputed;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impute::test_support::{assert_observed_unchanged, table};
    use crate::impute::{impute_linear, ImputationMethod};
    use approx::assert_abs_diff_eq;

    fn policy() -> ImputationPolicy {
        ImputationPolicy {
            method: ImputationMethod::Iterative,
            theta: 1.0,
            ..ImputationPolicy::default()
        }
    }

    #[test]
    fn complete_table_takes_zero_sweeps() {
        let t = table("year,country,score,a,b\n2000,A,0,1,2\n2001,A,0,2,4\n");
        let (out, report) = impute_iterative(&t, &policy()).unwrap();
        assert_eq!(out, t);
        assert_eq!(report.iterations_used, Some(0));
        assert_eq!(report.converged, Some(true));
        assert_eq!(report.cells_filled, 0);
    }

    #[test]
    fn matches_regression_imputation_on_exact_linear_data() {
        // b = 3a - 1 exactly; one gap in b
        let t = table(
            "year,country,score,a,b\n\
             2000,A,0,1,2\n\
             2001,A,0,2,5\n\
             2002,A,0,3,\n\
             2003,A,0,4,11\n\
             2004,A,0,5,14\n",
        );
        let b = t.column_index("b").unwrap();
        let (out, report) = impute_iterative(&t, &policy()).unwrap();
        let oracle = impute_linear(&t, b).unwrap();
        assert_abs_diff_eq!(
            out.cell(2, b).unwrap(),
            oracle[2].unwrap(),
            epsilon = 1e-6
        );
        assert_eq!(report.converged, Some(true));
        assert_observed_unchanged(&t, &out);
    }

    #[test]
    fn coupled_gaps_do_not_converge_in_one_sweep() {
        // gaps in both columns on different rows force multiple sweeps
        let t = table(
            "year,country,score,a,b\n\
             2000,A,0,1.0,10.5\n\
             2001,A,0,,21.0\n\
             2002,A,0,3.0,\n\
             2003,A,0,4.0,42.5\n\
             2004,A,0,5.0,52.0\n\
             2005,A,0,6.0,63.5\n",
        );
        let strict = ImputationPolicy {
            max_iterations: 1,
            tolerance: 1e-9,
            ..policy()
        };
        let (_, report) = impute_iterative(&t, &strict).unwrap();
        assert_eq!(report.converged, Some(false));
        assert_eq!(report.iterations_used, Some(1));

        let relaxed = ImputationPolicy {
            max_iterations: 50,
            ..policy()
        };
        let (_, report) = impute_iterative(&t, &relaxed).unwrap();
        assert_eq!(report.converged, Some(true));
    }

    #[test]
    fn noise_disabled_is_deterministic_and_seeded_noise_reproduces() {
        let csv = "year,country,score,a,b\n\
                   2000,A,0,1.0,3.0\n\
                   2001,A,0,2.0,\n\
                   2002,A,0,,8.9\n\
                   2003,A,0,4.0,12.2\n\
                   2004,A,0,5.0,14.8\n";
        let t = table(csv);
        let (out1, _) = impute_iterative(&t, &policy()).unwrap();
        let (out2, _) = impute_iterative(&t, &policy()).unwrap();
        assert_eq!(out1, out2);

        let noisy = ImputationPolicy {
            residual_noise: true,
            seed: 99,
            ..policy()
        };
        let (n1, _) = impute_iterative(&t, &noisy).unwrap();
        let (n2, _) = impute_iterative(&t, &noisy).unwrap();
        assert_eq!(n1, n2);
    }
}
