//! Missing-data imputation gated per row by a missing-rate threshold.
//!
//! A row qualifies for imputation when the fraction of missing cells among
//! the imputable columns is at most `theta`; rows above the threshold pass
//! through untouched. Three fill methods are provided: per-column linear
//! regression, inverse-distance-weighted KNN, and iterative column-wise
//! regression. Observed cells are never altered by any of them.

mod iterative;
mod knn;
mod linear;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::DataTable;

pub use iterative::impute_iterative;
pub use knn::impute_knn;
pub use linear::impute_linear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationMethod {
    Linear,
    Knn,
    Iterative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputationPolicy {
    pub method: ImputationMethod,
    /// Maximum allowed per-row missing rate over the imputable columns.
    pub theta: f64,
    /// Neighbor count for the KNN method.
    pub k: usize,
    /// Sweep limit for the iterative method.
    pub max_iterations: usize,
    /// Convergence threshold on the largest per-sweep cell change.
    pub tolerance: f64,
    pub seed: u64,
    /// When true, the iterative method adds a seeded Gaussian residual with
    /// the fit's residual standard deviation to each prediction.
    #[serde(default)]
    pub residual_noise: bool,
}

impl Default for ImputationPolicy {
    fn default() -> Self {
        ImputationPolicy {
            method: ImputationMethod::Linear,
            theta: 0.25,
            k: 5,
            max_iterations: 20,
            tolerance: 1e-6,
            seed: 0,
            residual_noise: false,
        }
    }
}

impl ImputationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ImputationReport {
    /// Rows whose missing rate was within the threshold.
    pub rows_imputed: usize,
    /// Rows above the threshold, passed through unchanged.
    pub rows_skipped: usize,
    pub cells_filled: usize,
    /// Sweeps performed (iterative method only).
    pub iterations_used: Option<usize>,
    /// Whether the iterative sweeps stabilized within tolerance.
    pub converged: Option<bool>,
    /// Columns that could not be filled for lack of training data.
    pub unfillable_columns: Vec<String>,
    /// Fits that needed the small-ridge fallback for a singular design.
    pub ridge_fallbacks: usize,
    /// Cells imputed from fewer than k neighbors (KNN method only).
    pub neighbor_shortfalls: usize,
}

/// Fraction of imputable columns missing in one row.
pub fn missing_rate(row: &[Option<f64>], imputable_columns: &[usize]) -> Result<f64> {
    if imputable_columns.is_empty() {
        return Err(Error::invalid("imputable column set is empty"));
    }
    let missing = imputable_columns
        .iter()
        .filter(|&&c| row[c].is_none())
        .count();
    Ok(missing as f64 / imputable_columns.len() as f64)
}

/// Per-row qualification mask under the policy threshold.
pub(crate) fn qualifying_rows(table: &DataTable, theta: f64) -> Vec<bool> {
    let imputable = table.imputable_columns();
    if imputable.is_empty() {
        return vec![true; table.n_rows()];
    }
    (0..table.n_rows())
        .map(|r| {
            let row = table.row(r);
            missing_rate(&row, &imputable).expect("imputable set nonempty") <= theta
        })
        .collect()
}

/// Outcome of filling a single column; merged into the report.
pub(crate) struct ColumnFill {
    pub column: usize,
    pub cells: Vec<Option<f64>>,
    pub filled: usize,
    pub ridge_fallbacks: usize,
    pub neighbor_shortfalls: usize,
    pub unfillable: bool,
}

/// Applies the policy's method to every qualifying row of the table.
pub fn impute_table(
    table: &DataTable,
    policy: &ImputationPolicy,
) -> Result<(DataTable, ImputationReport)> {
    policy.validate()?;
    let mask = qualifying_rows(table, policy.theta);
    let rows_imputed = mask.iter().filter(|&&q| q).count();
    let rows_skipped = table.n_rows() - rows_imputed;

    if let ImputationMethod::Iterative = policy.method {
        let (out, mut report) = iterative::impute_iterative_masked(table, policy, &mask)?;
        report.rows_imputed = rows_imputed;
        report.rows_skipped = rows_skipped;
        return Ok((out, report));
    }

    let imputable = table.imputable_columns();
    let fills: Vec<ColumnFill> = imputable
        .par_iter()
        .filter(|&&c| {
            (0..table.n_rows()).any(|r| mask[r] && table.cell(r, c).is_none())
        })
        .map(|&c| match policy.method {
            ImputationMethod::Linear => linear::fill_column_linear(table, c, &mask),
            ImputationMethod::Knn => knn::fill_column_knn(table, c, policy.k, &mask),
            ImputationMethod::Iterative => unreachable!("handled above"),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = ImputationReport {
        rows_imputed,
        rows_skipped,
        ..ImputationReport::default()
    };
    let mut columns: Vec<Vec<Option<f64>>> =
        (0..table.n_cols()).map(|c| table.column(c).to_vec()).collect();
    for fill in fills {
        report.cells_filled += fill.filled;
        report.ridge_fallbacks += fill.ridge_fallbacks;
        report.neighbor_shortfalls += fill.neighbor_shortfalls;
        if fill.unfillable {
            report
                .unfillable_columns
                .push(table.column_names()[fill.column].clone());
        }
        columns[fill.column] = fill.cells;
    }
    report.unfillable_columns.sort();
    Ok((table.with_columns(columns), report))
}
