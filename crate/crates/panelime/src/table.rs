//! Entity-by-year panel tables: loading, validation, entity encoding,
//! train/test splitting, and year-over-year reformatting.
//!
//! A [`DataTable`] is column-oriented and immutable once built. Every cell is
//! an `Option<f64>`; a `None` is a missing value. Exactly one column is the
//! entity, one the time axis, and one the regression target. Rows are kept
//! sorted by `(entity, time)` and `(entity, time)` pairs are unique.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role of a column within the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Entity,
    Time,
    Target,
    Numeric,
    Categorical,
}

/// Column-kind assignment used when loading a CSV. Columns not named here
/// default to [`ColumnKind::Numeric`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub entity: String,
    pub time: String,
    pub target: String,
    #[serde(default)]
    pub categorical: Vec<String>,
}

impl Schema {
    pub fn new(
        entity: impl Into<String>,
        time: impl Into<String>,
        target: impl Into<String>,
    ) -> Self {
        Schema {
            entity: entity.into(),
            time: time.into(),
            target: target.into(),
            categorical: Vec::new(),
        }
    }

    fn kind_of(&self, column: &str) -> ColumnKind {
        if column == self.entity {
            ColumnKind::Entity
        } else if column == self.time {
            ColumnKind::Time
        } else if column == self.target {
            ColumnKind::Target
        } else if self.categorical.iter().any(|c| c == column) {
            ColumnKind::Categorical
        } else {
            ColumnKind::Numeric
        }
    }
}

/// Mapping from entity name to integer code, assigned in lexicographic
/// name order so the encoding is deterministic and locale-independent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCodebook {
    names: Vec<String>,
}

impl EntityCodebook {
    /// Builds the codebook for a set of names. Codes depend only on the name
    /// set, never on row order.
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = names.into_iter().collect();
        EntityCodebook {
            names: set.into_iter().map(str::to_owned).collect(),
        }
    }

    pub fn code_of(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    pub fn name_of(&self, code: usize) -> Option<&str> {
        self.names.get(code).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Reproducible uniform train/test split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Column-oriented table with per-cell missing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    column_names: Vec<String>,
    column_kinds: Vec<ColumnKind>,
    /// Column-major cells; `columns[c][r]` is row `r` of column `c`.
    columns: Vec<Vec<Option<f64>>>,
    /// Raw entity label per row (survives encoding and reformatting).
    entity_labels: Vec<String>,
    /// Original time value of the row each output row was derived from.
    /// After differencing this is the *current* (later) year, even though
    /// the time column itself holds a difference or a lagged level.
    row_times: Vec<f64>,
}

/// Counts emitted by the reformatting operations.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReformatSummary {
    pub input_rows: usize,
    pub output_rows: usize,
    /// Entities with a single row contribute no output rows.
    pub single_row_entities: usize,
    /// Rows removed because the target difference had a missing operand.
    pub rows_dropped_missing_target: usize,
}

impl DataTable {
    /// Builds a table from column-major parts, sorting rows by
    /// `(entity, time)` and validating the panel invariants.
    pub fn from_parts(
        column_names: Vec<String>,
        column_kinds: Vec<ColumnKind>,
        columns: Vec<Vec<Option<f64>>>,
        entity_labels: Vec<String>,
    ) -> Result<Self> {
        let mut table = Self::from_parts_ordered(column_names, column_kinds, columns, entity_labels)?;
        table.sort_rows();
        table.check_duplicates()?;
        Ok(table)
    }

    /// As [`DataTable::from_parts`] but keeps the given row order and skips
    /// the `(entity, time)` uniqueness check. Meant for frames that have
    /// already been through the pipeline (e.g. differenced tables).
    pub fn from_parts_ordered(
        column_names: Vec<String>,
        column_kinds: Vec<ColumnKind>,
        columns: Vec<Vec<Option<f64>>>,
        entity_labels: Vec<String>,
    ) -> Result<Self> {
        if column_names.len() != column_kinds.len() || column_names.len() != columns.len() {
            return Err(Error::Schema(
                "column names, kinds, and data must have equal lengths".into(),
            ));
        }
        let n_rows = entity_labels.len();
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Schema("ragged columns".into()));
        }
        for kind in [ColumnKind::Entity, ColumnKind::Time, ColumnKind::Target] {
            let count = column_kinds.iter().filter(|&&k| k == kind).count();
            if count != 1 {
                return Err(Error::Schema(format!(
                    "expected exactly one {kind:?} column, found {count}"
                )));
            }
        }
        let time_col = column_kinds
            .iter()
            .position(|&k| k == ColumnKind::Time)
            .unwrap();
        let mut row_times = Vec::with_capacity(n_rows);
        for r in 0..n_rows {
            match columns[time_col][r] {
                Some(t) => row_times.push(t),
                None => {
                    return Err(Error::MissingCell {
                        row: r,
                        column: column_names[time_col].clone(),
                    })
                }
            }
        }

        Ok(DataTable {
            column_names,
            column_kinds,
            columns,
            entity_labels,
            row_times,
        })
    }

    fn sort_rows(&mut self) {
        let n = self.n_rows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.entity_labels[a]
                .cmp(&self.entity_labels[b])
                .then(self.row_times[a].total_cmp(&self.row_times[b]))
        });
        if order.iter().enumerate().all(|(i, &j)| i == j) {
            return;
        }
        for col in &mut self.columns {
            let reordered: Vec<_> = order.iter().map(|&j| col[j]).collect();
            *col = reordered;
        }
        self.entity_labels = order.iter().map(|&j| self.entity_labels[j].clone()).collect();
        self.row_times = order.iter().map(|&j| self.row_times[j]).collect();
    }

    fn check_duplicates(&self) -> Result<()> {
        for r in 1..self.n_rows() {
            if self.entity_labels[r] == self.entity_labels[r - 1]
                && self.row_times[r] == self.row_times[r - 1]
            {
                return Err(Error::DuplicateKey {
                    entity: self.entity_labels[r].clone(),
                    time: self.row_times[r],
                });
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_kinds(&self) -> &[ColumnKind] {
        &self.column_kinds
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|n| n == name)
    }

    pub fn column(&self, idx: usize) -> &[Option<f64>] {
        &self.columns[idx]
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<f64> {
        self.columns[col][row]
    }

    /// All cells of one row, in column order.
    pub fn row(&self, row: usize) -> Vec<Option<f64>> {
        self.columns.iter().map(|col| col[row]).collect()
    }

    pub fn entity_label(&self, row: usize) -> &str {
        &self.entity_labels[row]
    }

    /// Original time of the row this row was derived from (see field docs).
    pub fn row_time(&self, row: usize) -> f64 {
        self.row_times[row]
    }

    pub fn row_times(&self) -> &[f64] {
        &self.row_times
    }

    /// Restores row-time provenance on a table reloaded from CSV, where the
    /// time column may hold differences rather than original years.
    pub fn with_row_times(&self, times: Vec<f64>) -> Result<DataTable> {
        if times.len() != self.n_rows() {
            return Err(Error::invalid("row time count does not match row count"));
        }
        let mut out = self.clone();
        out.row_times = times;
        Ok(out)
    }

    pub fn entity_col(&self) -> usize {
        self.kind_col(ColumnKind::Entity)
    }

    pub fn time_col(&self) -> usize {
        self.kind_col(ColumnKind::Time)
    }

    pub fn target_col(&self) -> usize {
        self.kind_col(ColumnKind::Target)
    }

    fn kind_col(&self, kind: ColumnKind) -> usize {
        self.column_kinds
            .iter()
            .position(|&k| k == kind)
            .expect("validated at construction")
    }

    /// Columns eligible for imputation: plain numeric features. Entity,
    /// time, target, and categorical columns are excluded.
    pub fn imputable_columns(&self) -> Vec<usize> {
        self.column_kinds
            .iter()
            .enumerate()
            .filter(|(_, &k)| k == ColumnKind::Numeric)
            .map(|(i, _)| i)
            .collect()
    }

    /// Feature columns for model fitting: everything except the target.
    pub fn feature_columns(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&c| self.column_kinds[c] != ColumnKind::Target)
            .collect()
    }

    /// Dense feature matrix, target vector, and feature names for model
    /// fitting. Errors on the first missing cell encountered.
    #[allow(clippy::type_complexity)]
    pub fn to_xy(&self) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<String>)> {
        let feats = self.feature_columns();
        let target = self.target_col();
        let names = feats
            .iter()
            .map(|&c| self.column_names[c].clone())
            .collect();
        let mut x = Vec::with_capacity(self.n_rows());
        let mut y = Vec::with_capacity(self.n_rows());
        for r in 0..self.n_rows() {
            let mut row = Vec::with_capacity(feats.len());
            for &c in &feats {
                match self.columns[c][r] {
                    Some(v) => row.push(v),
                    None => {
                        return Err(Error::MissingCell {
                            row: r,
                            column: self.column_names[c].clone(),
                        })
                    }
                }
            }
            match self.columns[target][r] {
                Some(v) => y.push(v),
                None => {
                    return Err(Error::MissingCell {
                        row: r,
                        column: self.column_names[target].clone(),
                    })
                }
            }
            x.push(row);
        }
        Ok((x, y, names))
    }

    /// New table keeping only the given rows (indices must be sorted).
    pub fn select_rows(&self, rows: &[usize]) -> DataTable {
        debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        DataTable {
            column_names: self.column_names.clone(),
            column_kinds: self.column_kinds.clone(),
            columns: self
                .columns
                .iter()
                .map(|col| rows.iter().map(|&r| col[r]).collect())
                .collect(),
            entity_labels: rows.iter().map(|&r| self.entity_labels[r].clone()).collect(),
            row_times: rows.iter().map(|&r| self.row_times[r]).collect(),
        }
    }

    /// Drops rows containing any missing cell. Returns the filtered table
    /// and the number of rows removed.
    pub fn drop_rows_with_missing(&self) -> (DataTable, usize) {
        let keep: Vec<usize> = (0..self.n_rows())
            .filter(|&r| {
                self.columns.iter().enumerate().all(|(c, col)| {
                    self.column_kinds[c] == ColumnKind::Entity || col[r].is_some()
                })
            })
            .collect();
        let dropped = self.n_rows() - keep.len();
        (self.select_rows(&keep), dropped)
    }

    /// Ranges of row indices grouped by entity (rows are sorted by entity).
    pub fn entity_groups(&self) -> Vec<std::ops::Range<usize>> {
        let mut groups = Vec::new();
        let n = self.n_rows();
        let mut start = 0;
        for r in 1..=n {
            if r == n || self.entity_labels[r] != self.entity_labels[start] {
                groups.push(start..r);
                start = r;
            }
        }
        groups
    }

    /// Writes the table as CSV. The entity column carries the label; missing
    /// cells are written as the empty string.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(&self.column_names)?;
        let entity_col = self.entity_col();
        for r in 0..self.n_rows() {
            let record: Vec<String> = (0..self.n_cols())
                .map(|c| {
                    if c == entity_col {
                        self.entity_labels[r].clone()
                    } else {
                        match self.columns[c][r] {
                            Some(v) => format!("{v}"),
                            None => String::new(),
                        }
                    }
                })
                .collect();
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }

    /// Replaces one column's cells, preserving everything else. Intended for
    /// imputation, which fills columns one at a time.
    pub(crate) fn with_column(&self, idx: usize, cells: Vec<Option<f64>>) -> DataTable {
        debug_assert_eq!(cells.len(), self.n_rows());
        let mut out = self.clone();
        out.columns[idx] = cells;
        out
    }

    pub(crate) fn with_columns(&self, new: Vec<Vec<Option<f64>>>) -> DataTable {
        debug_assert_eq!(new.len(), self.n_cols());
        let mut out = self.clone();
        out.columns = new;
        out
    }
}

fn is_missing_token(token: &str) -> bool {
    let t = token.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("n/a")
}

/// Optional `old_name -> new_name` entity rename map.
pub type RenameMap = BTreeMap<String, String>;

/// Loads a two-column rename CSV (header row required).
pub fn load_rename_map(path: impl AsRef<Path>) -> Result<RenameMap> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut map = RenameMap::new();
    for record in reader.records() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::Schema(
                "rename map rows need two columns: old_name,new_name".into(),
            ));
        }
        map.insert(record[0].to_string(), record[1].to_string());
    }
    Ok(map)
}

/// Loads an RFC 4180 CSV into a [`DataTable`]. Empty strings, `NA`, and
/// `N/A` (case-insensitive) become missing cells. Rows come out sorted by
/// `(entity, time)`.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<DataTable> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, None)
}

pub fn load_csv_with_renames(
    path: impl AsRef<Path>,
    schema: &Schema,
    renames: &RenameMap,
) -> Result<DataTable> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, Some(renames))
}

/// Loads an already-processed frame (for example a differenced table written
/// by [`DataTable::write_csv`]) preserving row order. No `(entity, time)`
/// sorting or uniqueness check: after differencing the time column holds
/// changes, which may repeat within an entity.
pub fn load_frame_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<DataTable> {
    let file = std::fs::File::open(path)?;
    read_csv_impl(file, schema, None, false)
}

/// Reader-based variant of [`load_csv`].
pub fn read_csv<R: Read>(reader: R, schema: &Schema, renames: Option<&RenameMap>) -> Result<DataTable> {
    read_csv_impl(reader, schema, renames, true)
}

fn read_csv_impl<R: Read>(
    reader: R,
    schema: &Schema,
    renames: Option<&RenameMap>,
    canonicalize: bool,
) -> Result<DataTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    for required in [&schema.entity, &schema.time, &schema.target] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Schema(format!(
                "schema column {required:?} not found in CSV header"
            )));
        }
    }
    for cat in &schema.categorical {
        if !headers.iter().any(|h| h == cat) {
            return Err(Error::Schema(format!(
                "categorical column {cat:?} not found in CSV header"
            )));
        }
    }

    let kinds: Vec<ColumnKind> = headers.iter().map(|h| schema.kind_of(h)).collect();
    let entity_idx = kinds
        .iter()
        .position(|&k| k == ColumnKind::Entity)
        .expect("checked above");

    let n_cols = headers.len();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); n_cols];
    let mut entity_labels: Vec<String> = Vec::new();

    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != n_cols {
            return Err(Error::Schema(format!(
                "row {row_idx} has {} fields, expected {n_cols}",
                record.len()
            )));
        }
        for (c, raw) in record.iter().enumerate() {
            if c == entity_idx {
                let mut label = raw.trim().to_string();
                if let Some(map) = renames {
                    if let Some(renamed) = map.get(&label) {
                        label = renamed.clone();
                    }
                }
                if label.is_empty() {
                    return Err(Error::MissingCell {
                        row: row_idx,
                        column: headers[c].clone(),
                    });
                }
                entity_labels.push(label);
                // the entity cell stays empty until entities are encoded
                columns[c].push(None);
            } else if is_missing_token(raw) {
                columns[c].push(None);
            } else {
                match raw.trim().parse::<f64>() {
                    Ok(v) => columns[c].push(Some(v)),
                    Err(_) => {
                        return Err(Error::Parse {
                            row: row_idx,
                            column: headers[c].clone(),
                            token: raw.to_string(),
                        })
                    }
                }
            }
        }
    }

    if canonicalize {
        DataTable::from_parts(headers, kinds, columns, entity_labels)
    } else {
        DataTable::from_parts_ordered(headers, kinds, columns, entity_labels)
    }
}

/// Replaces the entity column with lexicographically assigned integer codes.
/// Re-encoding an already encoded table yields identical codes.
pub fn encode_entities(table: &DataTable) -> (DataTable, EntityCodebook) {
    let codebook = EntityCodebook::from_names(table.entity_labels.iter().map(String::as_str));
    let encoded = encode_entities_with(table, &codebook).expect("labels come from the codebook");
    (encoded, codebook)
}

/// Encodes the entity column against an existing codebook, so a persisted
/// split keeps the codes of the full table it was cut from. Errors on a
/// label the codebook does not know.
pub fn encode_entities_with(table: &DataTable, codebook: &EntityCodebook) -> Result<DataTable> {
    let entity_col = table.entity_col();
    let cells: Vec<Option<f64>> = table
        .entity_labels
        .iter()
        .map(|label| {
            codebook
                .code_of(label)
                .map(|code| Some(code as f64))
                .ok_or_else(|| Error::invalid(format!("entity {label:?} not in the codebook")))
        })
        .collect::<Result<_>>()?;
    Ok(table.with_column(entity_col, cells))
}

/// Uniform random row partition, reproducible under the given seed.
/// `|train| = round(train_fraction * n_rows)`.
pub fn split(table: &DataTable, spec: &SplitSpec) -> Result<(DataTable, DataTable)> {
    let n = table.n_rows();
    if n < 2 {
        return Err(Error::invalid(format!(
            "split needs at least 2 rows, got {n}"
        )));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let mut train_rows: Vec<usize> = order[..n_train].to_vec();
    let mut test_rows: Vec<usize> = order[n_train..].to_vec();
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok((table.select_rows(&train_rows), table.select_rows(&test_rows)))
}

fn diff_cell(cur: Option<f64>, prev: Option<f64>) -> Option<f64> {
    match (cur, prev) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    }
}

fn reformat(
    table: &DataTable,
    lag_features: bool,
) -> Result<(DataTable, ReformatSummary)> {
    let entity_col = table.entity_col();
    let target_col = table.target_col();
    let mut summary = ReformatSummary {
        input_rows: table.n_rows(),
        ..ReformatSummary::default()
    };

    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); table.n_cols()];
    let mut entity_labels = Vec::new();
    let mut row_times = Vec::new();

    for group in table.entity_groups() {
        if group.len() < 2 {
            summary.single_row_entities += 1;
            continue;
        }
        for r in group.start + 1..group.end {
            let prev = r - 1;
            let target_diff = diff_cell(table.cell(r, target_col), table.cell(prev, target_col));
            if target_diff.is_none() {
                summary.rows_dropped_missing_target += 1;
                continue;
            }
            for c in 0..table.n_cols() {
                let value = if c == entity_col {
                    table.cell(r, c)
                } else if c == target_col {
                    target_diff
                } else if lag_features {
                    table.cell(prev, c)
                } else {
                    diff_cell(table.cell(r, c), table.cell(prev, c))
                };
                columns[c].push(value);
            }
            entity_labels.push(table.entity_labels[r].clone());
            row_times.push(table.row_times[r]);
        }
    }

    summary.output_rows = entity_labels.len();
    let out = DataTable {
        column_names: table.column_names.clone(),
        column_kinds: table.column_kinds.clone(),
        columns,
        entity_labels,
        row_times,
    };
    Ok((out, summary))
}

/// Replaces every non-entity column (time and target included) with
/// current-minus-previous within each entity. The first row of each entity
/// is dropped; entities with a single row contribute nothing. Rows whose
/// target difference has a missing operand are dropped so the target column
/// stays fully observed.
pub fn diff_all(table: &DataTable) -> Result<(DataTable, ReformatSummary)> {
    reformat(table, false)
}

/// Differences only the target; every other non-entity column carries the
/// previous row's level value. First row per entity dropped, as above.
pub fn diff_target_lag_features(table: &DataTable) -> Result<(DataTable, ReformatSummary)> {
    reformat(table, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn schema() -> Schema {
        Schema::new("country", "year", "score")
    }

    pub(crate) fn table_from_csv(data: &str, schema: &Schema) -> DataTable {
        read_csv(data.as_bytes(), schema, None).unwrap()
    }

    #[test]
    fn loads_missing_tokens_as_missing() {
        // shaped like an economic-freedom snippet row with two absent cells
        let csv = "year,country,score,a,b,c\n1995,Bangladesh,5.3,5.122456,N/A,NA\n";
        let t = table_from_csv(csv, &schema());
        assert_eq!(t.n_rows(), 1);
        assert_eq!(t.cell(0, 3), Some(5.122456));
        assert_eq!(t.cell(0, 4), None);
        assert_eq!(t.cell(0, 5), None);
    }

    #[test]
    fn header_only_file_gives_zero_rows() {
        let t = table_from_csv("year,country,score\n", &schema());
        assert_eq!(t.n_rows(), 0);
        assert_eq!(t.n_cols(), 3);
    }

    #[test]
    fn rows_are_sorted_by_entity_then_time() {
        let csv = "year,country,score\n2000,A,1\n1999,A,2\n2001,A,3\n";
        let t = table_from_csv(csv, &schema());
        let years: Vec<f64> = (0..3).map(|r| t.cell(r, 0).unwrap()).collect();
        assert_eq!(years, vec![1999.0, 2000.0, 2001.0]);
    }

    #[test]
    fn duplicate_entity_time_is_rejected() {
        let csv = "year,country,score\n2000,A,1\n2000,A,2\n";
        let err = read_csv(csv.as_bytes(), &schema(), None).unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { .. }));
    }

    #[test]
    fn non_numeric_token_is_rejected() {
        let csv = "year,country,score\n2000,A,abc\n";
        let err = read_csv(csv.as_bytes(), &schema(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn rename_map_is_applied_before_sorting() {
        let csv = "year,country,score\n2000,Swaziland,1\n2001,Eswatini,2\n";
        let mut renames = RenameMap::new();
        renames.insert("Swaziland".into(), "Eswatini".into());
        let t = read_csv(csv.as_bytes(), &schema(), Some(&renames)).unwrap();
        assert_eq!(t.entity_label(0), "Eswatini");
        assert_eq!(t.entity_label(1), "Eswatini");
        // and differencing now treats them as one entity
        let (diffed, _) = diff_all(&t).unwrap();
        assert_eq!(diffed.n_rows(), 1);
    }

    #[test]
    fn encode_assigns_lexicographic_codes() {
        let csv = "year,country,score\n2000,Brazil,1\n2001,Andorra,2\n2001,Brazil,3\n";
        let t = table_from_csv(csv, &schema());
        let (encoded, codebook) = encode_entities(&t);
        assert_eq!(codebook.code_of("Andorra"), Some(0));
        assert_eq!(codebook.code_of("Brazil"), Some(1));
        let entity = encoded.entity_col();
        for r in 0..encoded.n_rows() {
            let code = encoded.cell(r, entity).unwrap() as usize;
            assert_eq!(codebook.name_of(code), Some(encoded.entity_label(r)));
        }
        // idempotence
        let (again, codebook2) = encode_entities(&encoded);
        assert_eq!(again, encoded);
        assert_eq!(codebook2, codebook);
    }

    #[test]
    fn encode_single_entity() {
        let csv = "year,country,score\n2000,Solo,1\n";
        let (encoded, codebook) = encode_entities(&table_from_csv(csv, &schema()));
        assert_eq!(codebook.len(), 1);
        assert_eq!(encoded.cell(0, encoded.entity_col()), Some(0.0));
    }

    #[test]
    fn encode_depends_only_on_name_set() {
        let a = table_from_csv("year,country,score\n2000,X,1\n2000,Y,1\n", &schema());
        let b = table_from_csv("year,country,score\n2000,Y,1\n2000,X,1\n", &schema());
        let (_, ca) = encode_entities(&a);
        let (_, cb) = encode_entities(&b);
        assert_eq!(ca, cb);
    }

    fn numbered_table(n: usize) -> DataTable {
        let csv: String = std::iter::once("year,country,score\n".to_string())
            .chain((0..n).map(|i| format!("{},E{},{}\n", 2000 + i, i % 7, i)))
            .collect();
        table_from_csv(&csv, &schema())
    }

    #[test]
    fn split_fractions_and_determinism() {
        let t = numbered_table(10);
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 3,
        };
        let (train, test) = split(&t, &spec).unwrap();
        assert_eq!(train.n_rows(), 8);
        assert_eq!(test.n_rows(), 2);
        let (train2, test2) = split(&t, &spec).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_partitions_the_row_set() {
        let t = numbered_table(1000);
        let (train, test) = split(
            &t,
            &SplitSpec {
                train_fraction: 0.8,
                seed: 7,
            },
        )
        .unwrap();
        let key = |tbl: &DataTable, r: usize| (tbl.entity_label(r).to_owned(), tbl.row_time(r).to_bits());
        let mut seen: BTreeSet<(String, u64)> = BTreeSet::new();
        for r in 0..train.n_rows() {
            assert!(seen.insert(key(&train, r)));
        }
        for r in 0..test.n_rows() {
            assert!(seen.insert(key(&test, r)), "row in both partitions");
        }
        assert_eq!(seen.len(), 1000);
    }

    #[test]
    fn split_rejects_tiny_tables() {
        let t = numbered_table(1);
        assert!(split(
            &t,
            &SplitSpec {
                train_fraction: 0.8,
                seed: 0
            }
        )
        .is_err());
    }

    #[test]
    fn diff_all_matches_table_vi_cases() {
        let csv = "year,country,score\n\
                   2011,Syria,6.18\n2012,Syria,5.27\n\
                   1995,Brazil,4.66\n2000,Brazil,5.98\n";
        let t = table_from_csv(csv, &schema());
        let (d, summary) = diff_all(&t).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(summary.output_rows, 2);
        let target = d.target_col();
        let by_label = |label: &str| {
            (0..d.n_rows())
                .find(|&r| d.entity_label(r) == label)
                .unwrap()
        };
        assert_abs_diff_eq!(d.cell(by_label("Syria"), target).unwrap(), -0.91, epsilon = 1e-9);
        assert_abs_diff_eq!(d.cell(by_label("Brazil"), target).unwrap(), 1.32, epsilon = 1e-9);
        // time column is differenced too
        assert_abs_diff_eq!(d.cell(by_label("Brazil"), d.time_col()).unwrap(), 5.0, epsilon = 1e-12);
        // provenance keeps the current year
        assert_abs_diff_eq!(d.row_time(by_label("Syria")), 2012.0, epsilon = 1e-12);
    }

    #[test]
    fn diff_all_constant_series_gives_zeros() {
        let csv = "year,country,score,a\n2000,A,3,7\n2001,A,3,7\n2002,A,3,7\n";
        let (d, _) = diff_all(&table_from_csv(csv, &schema())).unwrap();
        assert_eq!(d.n_rows(), 2);
        for r in 0..2 {
            assert_eq!(d.cell(r, d.target_col()), Some(0.0));
            assert_eq!(d.cell(r, 3), Some(0.0));
        }
    }

    #[test]
    fn diff_row_count_identity_and_single_row_warning() {
        let csv = "year,country,score\n2000,A,1\n2001,A,2\n2002,A,3\n2000,B,5\n2005,C,1\n2006,C,2\n";
        let t = table_from_csv(csv, &schema());
        let (d, summary) = diff_all(&t).unwrap();
        // sum over entities of max(rows - 1, 0) = 2 + 0 + 1
        assert_eq!(d.n_rows(), 3);
        assert_eq!(summary.single_row_entities, 1);
    }

    #[test]
    fn diff_telescopes_to_last_minus_first() {
        let csv = "year,country,score\n2000,A,1.25\n2001,A,8.5\n2002,A,2.125\n2003,A,9.75\n";
        let t = table_from_csv(csv, &schema());
        let (d, _) = diff_all(&t).unwrap();
        let total: f64 = (0..d.n_rows())
            .map(|r| d.cell(r, d.target_col()).unwrap())
            .sum();
        assert_abs_diff_eq!(total, 9.75 - 1.25, epsilon = 1e-9);
    }

    #[test]
    fn diff_propagates_missing_features_and_drops_missing_target() {
        let csv = "year,country,score,a\n2000,A,1,\n2001,A,2,4\n2002,A,,5\n2003,A,7,6\n";
        let t = table_from_csv(csv, &schema());
        let (d, summary) = diff_all(&t).unwrap();
        // 2001 row survives (target 2-1) but feature a is missing-missing
        assert_eq!(d.n_rows(), 1);
        assert_eq!(d.cell(0, 3), None);
        // 2002 (missing current target) and 2003 (missing previous target) dropped
        assert_eq!(summary.rows_dropped_missing_target, 2);
    }

    #[test]
    fn diff_target_lag_keeps_prior_levels() {
        let csv = "year,country,pop,rate\n1,A,100,5\n2,A,130,6\n";
        let schema = Schema::new("country", "year", "pop");
        let t = table_from_csv(csv, &schema);
        let (d, _) = diff_target_lag_features(&t).unwrap();
        assert_eq!(d.n_rows(), 1);
        assert_eq!(d.cell(0, d.target_col()), Some(30.0));
        let rate = d.column_index("rate").unwrap();
        assert_eq!(d.cell(0, rate), Some(5.0));
        // the time feature also carries the previous level
        assert_eq!(d.cell(0, d.time_col()), Some(1.0));
    }

    #[test]
    fn diff_target_lag_constant_target() {
        let csv = "year,country,pop,rate\n1,A,100,5\n2,A,100,6\n3,A,100,7\n";
        let schema = Schema::new("country", "year", "pop");
        let (d, _) = diff_target_lag_features(&table_from_csv(csv, &schema)).unwrap();
        assert_eq!(d.n_rows(), 2);
        let rate = d.column_index("rate").unwrap();
        assert_eq!(d.cell(0, d.target_col()), Some(0.0));
        assert_eq!(d.cell(0, rate), Some(5.0));
        assert_eq!(d.cell(1, rate), Some(6.0));
    }

    #[test]
    fn to_xy_rejects_missing_cells() {
        let t = table_from_csv("year,country,score,a\n2000,A,1,\n2001,A,2,3\n", &schema());
        let (encoded, _) = encode_entities(&t);
        assert!(matches!(encoded.to_xy(), Err(Error::MissingCell { .. })));
        let (complete, dropped) = encoded.drop_rows_with_missing();
        assert_eq!(dropped, 1);
        assert!(complete.to_xy().is_ok());
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let csv = "year,country,score,a\n2000,A,1.125,\n2001,A,-0.91,3.3333333333333335\n";
        let t = table_from_csv(csv, &schema());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let reloaded = read_csv(buf.as_slice(), &schema(), None).unwrap();
        assert_eq!(t, reloaded);
    }
}
