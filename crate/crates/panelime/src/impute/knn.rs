//! KNN imputation: a missing value becomes the inverse-distance-weighted
//! average of the k nearest rows that observe it. Distances are Euclidean
//! over the z-scored columns that are complete across the whole table, so
//! every pair of rows has a defined distance.

use crate::error::{Error, Result};
use crate::impute::ColumnFill;
use crate::stats;
use crate::table::DataTable;

/// Columns usable for distances: time plus the imputable columns, kept only
/// when fully observed and non-constant. Paired with (mean, std) for
/// z-scoring.
fn distance_columns(table: &DataTable) -> Vec<(usize, f64, f64)> {
    let mut candidates = vec![table.time_col()];
    candidates.extend(table.imputable_columns());
    candidates
        .into_iter()
        .filter_map(|c| {
            let column = table.column(c);
            let values: Option<Vec<f64>> = column.iter().copied().collect();
            let values = values?;
            if values.len() < 2 {
                return None;
            }
            let mean = stats::mean(&values);
            let std = stats::sample_std(&values);
            if std > 0.0 {
                Some((c, mean, std))
            } else {
                None
            }
        })
        .collect()
}

fn distance(table: &DataTable, a: usize, b: usize, cols: &[(usize, f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for &(c, _, std) in cols {
        let da = table.cell(a, c).expect("distance column is complete");
        let db = table.cell(b, c).expect("distance column is complete");
        let d = (da - db) / std;
        acc += d * d;
    }
    acc.sqrt()
}

pub(crate) fn fill_column_knn(
    table: &DataTable,
    target_column: usize,
    k: usize,
    fill_mask: &[bool],
) -> Result<ColumnFill> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let cols = distance_columns(table);
    let column = table.column(target_column);
    let donors: Vec<usize> = (0..table.n_rows())
        .filter(|&r| column[r].is_some())
        .collect();

    let mut fill = ColumnFill {
        column: target_column,
        cells: column.to_vec(),
        filled: 0,
        ridge_fallbacks: 0,
        neighbor_shortfalls: 0,
        unfillable: false,
    };

    for r in 0..table.n_rows() {
        if column[r].is_some() || !fill_mask[r] {
            continue;
        }
        if donors.is_empty() || cols.is_empty() {
            fill.unfillable = true;
            continue;
        }
        let mut ranked: Vec<(f64, usize)> = donors
            .iter()
            .map(|&d| (distance(table, r, d, &cols), d))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if ranked.len() < k {
            fill.neighbor_shortfalls += 1;
        }
        let nearest = &ranked[..k.min(ranked.len())];

        // an exact duplicate (d = 0) has infinite weight and takes over;
        // with several duplicates their plain average is the limit value
        let zero_distance: Vec<f64> = nearest
            .iter()
            .take_while(|(d, _)| *d == 0.0)
            .map(|&(_, row)| column[row].unwrap())
            .collect();
        let value = if !zero_distance.is_empty() {
            stats::mean(&zero_distance)
        } else {
            let mut num = 0.0;
            let mut den = 0.0;
            for &(d, row) in nearest {
                let w = 1.0 / d;
                num += w * column[row].unwrap();
                den += w;
            }
            num / den
        };
        fill.cells[r] = Some(value);
        fill.filled += 1;
    }
    Ok(fill)
}

/// Fills every missing cell in the imputable columns by KNN.
pub fn impute_knn(table: &DataTable, k: usize) -> Result<DataTable> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mask = vec![true; table.n_rows()];
    let mut columns: Vec<Vec<Option<f64>>> =
        (0..table.n_cols()).map(|c| table.column(c).to_vec()).collect();
    for c in table.imputable_columns() {
        if table.column(c).iter().all(Option::is_some) {
            continue;
        }
        let fill = fill_column_knn(table, c, k, &mask)?;
        columns[c] = fill.cells;
    }
    Ok(table.with_columns(columns))
}
