//! Regression imputation: each missing value is predicted from an ordinary
//! least-squares fit of its column on the other feature columns.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::impute::ColumnFill;
use crate::linalg;
use crate::table::DataTable;

/// Predictor columns for regressing `target_column`: the time column plus
/// every other imputable column. For a given row only the predictors that
/// are observed there can be used, so fits are grouped by missingness
/// pattern.
fn predictor_pool(table: &DataTable, target_column: usize) -> Vec<usize> {
    let mut pool = vec![table.time_col()];
    pool.extend(
        table
            .imputable_columns()
            .into_iter()
            .filter(|&c| c != target_column),
    );
    pool
}

pub(crate) fn fill_column_linear(
    table: &DataTable,
    target_column: usize,
    fill_mask: &[bool],
) -> Result<ColumnFill> {
    let pool = predictor_pool(table, target_column);
    let column = table.column(target_column);

    // group the rows to fill by the set of predictors observed there
    let mut patterns: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (r, cell) in column.iter().enumerate() {
        if cell.is_some() || !fill_mask[r] {
            continue;
        }
        let observed: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&c| table.cell(r, c).is_some())
            .collect();
        patterns.entry(observed).or_default().push(r);
    }

    let mut fill = ColumnFill {
        column: target_column,
        cells: column.to_vec(),
        filled: 0,
        ridge_fallbacks: 0,
        neighbor_shortfalls: 0,
        unfillable: false,
    };
    if patterns.is_empty() {
        return Ok(fill);
    }

    for (predictors, rows) in patterns {
        // training rows: target observed and every pattern predictor observed
        let mut x_train: Vec<Vec<f64>> = Vec::new();
        let mut y_train: Vec<f64> = Vec::new();
        for r in 0..table.n_rows() {
            let Some(y) = table.cell(r, target_column) else {
                continue;
            };
            if let Some(xs) = gather(table, r, &predictors) {
                x_train.push(xs);
                y_train.push(y);
            }
        }
        if x_train.is_empty() {
            fill.unfillable = true;
            continue;
        }
        let model = match linalg::fit_linear(&x_train, &y_train, None, 0.0) {
            Some(m) => m,
            None => {
                fill.unfillable = true;
                continue;
            }
        };
        if model.ridge_fallback {
            fill.ridge_fallbacks += 1;
        }
        for r in rows {
            let xs = gather(table, r, &predictors).expect("pattern predictors observed");
            fill.cells[r] = Some(model.predict_one(&xs));
            fill.filled += 1;
        }
    }
    Ok(fill)
}

fn gather(table: &DataTable, row: usize, columns: &[usize]) -> Option<Vec<f64>> {
    columns.iter().map(|&c| table.cell(row, c)).collect()
}

/// Fills every missing cell of one column by OLS on the other features,
/// returning the filled column. Singular designs silently fall back to a
/// tiny ridge penalty.
pub fn impute_linear(table: &DataTable, target_column: usize) -> Result<Vec<Option<f64>>> {
    if target_column >= table.n_cols() {
        return Err(Error::invalid(format!(
            "column index {target_column} out of range"
        )));
    }
    let mask = vec![true; table.n_rows()];
    let fill = fill_column_linear(table, target_column, &mask)?;
    Ok(fill.cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impute::test_support::table;
    use approx::assert_abs_diff_eq;

    #[test]
    fn recovers_exact_doubling() {
        // column b = 2 * a, missing where a = 3
        let t = table(
            "year,country,score,a,b\n\
             2000,A,0,1,2\n\
             2001,A,0,2,4\n\
             2002,A,0,3,\n\
             2003,A,0,4,8\n\
             2004,A,0,5,10\n",
        );
        let b = t.column_index("b").unwrap();
        let filled = impute_linear(&t, b).unwrap();
        assert_abs_diff_eq!(filled[2].unwrap(), 6.0, epsilon = 1e-9);
    }

    #[test]
    fn complete_column_is_unchanged() {
        let t = table("year,country,score,a,b\n2000,A,0,1,2\n2001,A,0,2,4\n");
        let b = t.column_index("b").unwrap();
        let filled = impute_linear(&t, b).unwrap();
        assert_eq!(filled, t.column(b).to_vec());
    }

    #[test]
    fn recovers_additive_plane() {
        // b = x1 + x2 on 10 complete rows, missing at (2, 5)
        let mut csv = String::from("year,country,score,x1,x2,b\n");
        for i in 0..10 {
            let x1 = ((i * 3) % 10) as f64;
            let x2 = (i * i % 7) as f64;
            csv.push_str(&format!("{},A,0,{},{},{}\n", 2000 + i, x1, x2, x1 + x2));
        }
        csv.push_str("2010,A,0,2,5,\n");
        let t = table(&csv);
        let b = t.column_index("b").unwrap();
        let filled = impute_linear(&t, b).unwrap();
        assert_abs_diff_eq!(filled[10].unwrap(), 7.0, epsilon = 1e-9);
    }

    #[test]
    fn no_training_rows_leaves_column_unfillable() {
        // b is never observed, so there is nothing to fit
        let t = table("year,country,score,a,b\n2000,A,0,1,\n2001,A,0,2,\n");
        let b = t.column_index("b").unwrap();
        let mask = vec![true; t.n_rows()];
        let fill = fill_column_linear(&t, b, &mask).unwrap();
        assert!(fill.unfillable);
        assert_eq!(fill.filled, 0);
    }
}
