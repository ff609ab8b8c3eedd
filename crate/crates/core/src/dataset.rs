//! Tabular ingestion: load, clean and scale numeric data.
//!
//! A [`DataMatrix`] holds the numeric columns that are clustered and tested.
//! Non-numeric columns from the source file are kept alongside as string
//! label columns; they never enter any computation but support row filtering
//! (for example selecting a negative-control subset by species and sex).
//! Missing numeric cells are represented as `NaN` until
//! [`drop_incomplete_rows`] removes them.

use std::path::Path;

use thiserror::Error;

/// Markers treated as missing, compared case-insensitively after trimming.
const MISSING_MARKERS: [&str; 3] = ["", "na", "nan"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no observations")]
    NoObservations,
    #[error("no numeric columns selected")]
    NoNumericColumns,
    #[error("column {name:?} not found")]
    MissingColumn { name: String },
    #[error("duplicate column name {name:?}")]
    DuplicateColumn { name: String },
    #[error("non-numeric value {value:?} in column {column:?}, row {row}")]
    NonNumeric {
        value: String,
        column: String,
        row: usize,
    },
    #[error("insufficient complete observations: {left} of {total} rows remain")]
    InsufficientCompleteRows { left: usize, total: usize },
    #[error("column {name:?} is constant; cannot scale")]
    ConstantColumn { name: String },
    #[error("matrix has missing values; drop incomplete rows first")]
    HasMissing,
    #[error("column count mismatch: {expected} names for {found} columns")]
    ShapeMismatch { expected: usize, found: usize },
}

/// A non-numeric column retained for row filtering; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelColumn {
    pub name: String,
    pub values: Vec<Option<String>>,
}

/// Dense n x p numeric table with named columns, stored column-major.
///
/// Rows are observations, columns are variables. Missing values are `NaN`
/// and must be removed via [`drop_incomplete_rows`] before the matrix enters
/// clustering or testing. Construction allows n = 1 (simulation generators
/// produce degenerate matrices); analysis entry points require n >= 2.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Vec<f64>,
    column_names: Vec<String>,
    n: usize,
    p: usize,
    labels: Vec<LabelColumn>,
}

impl DataMatrix {
    /// Builds a matrix from equally long columns. Column names must be unique.
    pub fn from_columns(
        column_names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self, DatasetError> {
        if column_names.len() != columns.len() {
            return Err(DatasetError::ShapeMismatch {
                expected: column_names.len(),
                found: columns.len(),
            });
        }
        if columns.is_empty() {
            return Err(DatasetError::NoNumericColumns);
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(DatasetError::NoObservations);
        }
        for col in &columns[1..] {
            if col.len() != n {
                return Err(DatasetError::ShapeMismatch {
                    expected: n,
                    found: col.len(),
                });
            }
        }
        for (i, name) in column_names.iter().enumerate() {
            if column_names[..i].contains(name) {
                return Err(DatasetError::DuplicateColumn { name: name.clone() });
            }
        }
        let p = columns.len();
        let mut values = Vec::with_capacity(n * p);
        for col in &columns {
            values.extend_from_slice(col);
        }
        Ok(DataMatrix {
            values,
            column_names,
            n,
            p,
            labels: Vec::new(),
        })
    }

    /// Attaches label columns; each must have one value per row.
    pub fn with_labels(mut self, labels: Vec<LabelColumn>) -> Result<Self, DatasetError> {
        for lab in &labels {
            if lab.values.len() != self.n {
                return Err(DatasetError::ShapeMismatch {
                    expected: self.n,
                    found: lab.values.len(),
                });
            }
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn labels(&self) -> &[LabelColumn] {
        &self.labels
    }

    pub fn column(&self, g: usize) -> &[f64] {
        &self.values[g * self.n..(g + 1) * self.n]
    }

    pub fn column_mut(&mut self, g: usize) -> &mut [f64] {
        &mut self.values[g * self.n..(g + 1) * self.n]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[col * self.n + row]
    }

    /// Index of the column with the given name.
    pub fn column_index(&self, name: &str) -> Result<usize, DatasetError> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DatasetError::MissingColumn {
                name: name.to_string(),
            })
    }

    /// True when no numeric cell is NaN and no label cell is missing.
    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| !v.is_nan())
            && self
                .labels
                .iter()
                .all(|lab| lab.values.iter().all(|v| v.is_some()))
    }

    /// Keeps the rows where `keep` is true, preserving order; labels follow.
    pub fn filter_rows(&self, keep: &[bool]) -> Result<Self, DatasetError> {
        assert_eq!(keep.len(), self.n, "filter mask length mismatch");
        let rows: Vec<usize> = (0..self.n).filter(|&i| keep[i]).collect();
        if rows.is_empty() {
            return Err(DatasetError::NoObservations);
        }
        let columns: Vec<Vec<f64>> = (0..self.p)
            .map(|g| {
                let col = self.column(g);
                rows.iter().map(|&i| col[i]).collect()
            })
            .collect();
        let labels = self
            .labels
            .iter()
            .map(|lab| LabelColumn {
                name: lab.name.clone(),
                values: rows.iter().map(|&i| lab.values[i].clone()).collect(),
            })
            .collect();
        DataMatrix::from_columns(self.column_names.clone(), columns)?.with_labels(labels)
    }

    /// Serializes numeric and label columns back to CSV at full precision.
    /// Missing cells become empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        header.extend(self.labels.iter().map(|l| l.name.as_str()));
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.n {
            let mut fields: Vec<String> = (0..self.p)
                .map(|g| {
                    let v = self.get(i, g);
                    if v.is_nan() {
                        String::new()
                    } else {
                        format!("{v}")
                    }
                })
                .collect();
            for lab in &self.labels {
                fields.push(lab.values[i].clone().unwrap_or_default());
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// CSV parsing options. `columns = None` auto-detects numeric columns: a
/// column is numeric when every non-missing cell parses as a real number.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// Names of the columns to load as numeric; all others become labels.
    pub columns: Option<Vec<String>>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            has_header: true,
            columns: None,
        }
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    MISSING_MARKERS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

/// Loads a delimited text file into a [`DataMatrix`].
///
/// Selected numeric columns must contain only real numbers or missing
/// markers (empty, "NA", "NaN", case-insensitive); missing cells become NaN.
/// Remaining columns are retained as string labels.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<DataMatrix, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(false)
        .from_reader(file);

    let names: Vec<String> = if options.has_header {
        reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect()
    } else {
        Vec::new()
    };

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(record.iter().map(|c| c.to_string()).collect());
    }
    if rows.is_empty() {
        return Err(DatasetError::NoObservations);
    }
    let width = rows[0].len();
    let names = if options.has_header {
        names
    } else {
        (1..=width).map(|i| format!("c{i}")).collect()
    };
    for (i, name) in names.iter().enumerate() {
        if names[..i].contains(name) {
            return Err(DatasetError::DuplicateColumn { name: name.clone() });
        }
    }

    // Decide which columns are numeric.
    let numeric: Vec<bool> = match &options.columns {
        Some(wanted) => {
            for w in wanted {
                if !names.contains(w) {
                    return Err(DatasetError::MissingColumn { name: w.clone() });
                }
            }
            names.iter().map(|n| wanted.contains(n)).collect()
        }
        None => (0..width)
            .map(|j| {
                rows.iter()
                    .all(|r| is_missing(&r[j]) || parse_cell(&r[j]).is_some())
            })
            .collect(),
    };
    if !numeric.iter().any(|&b| b) {
        return Err(DatasetError::NoNumericColumns);
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut column_names: Vec<String> = Vec::new();
    let mut labels: Vec<LabelColumn> = Vec::new();
    for j in 0..width {
        if numeric[j] {
            let mut col = Vec::with_capacity(rows.len());
            for (i, r) in rows.iter().enumerate() {
                if is_missing(&r[j]) {
                    col.push(f64::NAN);
                } else {
                    match parse_cell(&r[j]) {
                        Some(v) => col.push(v),
                        None => {
                            return Err(DatasetError::NonNumeric {
                                value: r[j].clone(),
                                column: names[j].clone(),
                                row: i + 1,
                            })
                        }
                    }
                }
            }
            columns.push(col);
            column_names.push(names[j].clone());
        } else {
            labels.push(LabelColumn {
                name: names[j].clone(),
                values: rows
                    .iter()
                    .map(|r| {
                        if is_missing(&r[j]) {
                            None
                        } else {
                            Some(r[j].trim().to_string())
                        }
                    })
                    .collect(),
            });
        }
    }
    DataMatrix::from_columns(column_names, columns)?.with_labels(labels)
}

/// Drops every row containing a missing cell, numeric or label.
///
/// Row order is preserved. Errors when fewer than 2 complete rows remain.
pub fn drop_incomplete_rows(m: &DataMatrix) -> Result<DataMatrix, DatasetError> {
    let keep: Vec<bool> = (0..m.n)
        .map(|i| {
            (0..m.p).all(|g| !m.get(i, g).is_nan())
                && m.labels.iter().all(|lab| lab.values[i].is_some())
        })
        .collect();
    let left = keep.iter().filter(|&&b| b).count();
    if left < 2 {
        return Err(DatasetError::InsufficientCompleteRows { left, total: m.n });
    }
    m.filter_rows(&keep)
}

/// Centers and scales every column to sample mean 0 and standard deviation 1
/// (denominator n - 1). Errors on a constant column, naming it.
pub fn zscale(m: &DataMatrix) -> Result<DataMatrix, DatasetError> {
    if m.values.iter().any(|v| v.is_nan()) {
        return Err(DatasetError::HasMissing);
    }
    let mut columns = Vec::with_capacity(m.p);
    for g in 0..m.p {
        let col = m.column(g);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        if ss == 0.0 || col.len() < 2 {
            return Err(DatasetError::ConstantColumn {
                name: m.column_names[g].clone(),
            });
        }
        let sd = (ss / (n - 1.0)).sqrt();
        columns.push(col.iter().map(|v| (v - mean) / sd).collect());
    }
    DataMatrix::from_columns(m.column_names.clone(), columns)?.with_labels(m.labels.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn matrix(cols: &[(&str, &[f64])]) -> DataMatrix {
        DataMatrix::from_columns(
            cols.iter().map(|(n, _)| n.to_string()).collect(),
            cols.iter().map(|(_, v)| v.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn load_small_integer_csv_exactly() {
        let f = write_temp("a,b\n1,4\n2,5\n3,6\n");
        let m = load_csv(f.path(), &CsvOptions::default()).unwrap();
        assert_eq!((m.n(), m.p()), (3, 2));
        assert_eq!(m.column(0), &[1.0, 2.0, 3.0]);
        assert_eq!(m.column(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn header_only_file_is_an_error() {
        let f = write_temp("a,b\n");
        match load_csv(f.path(), &CsvOptions::default()) {
            Err(DatasetError::NoObservations) => {}
            other => panic!("expected NoObservations, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_in_selected_column_errors() {
        let f = write_temp("a,b\n1,x\n2,y\n");
        let opts = CsvOptions {
            columns: Some(vec!["a".into(), "b".into()]),
            ..CsvOptions::default()
        };
        match load_csv(f.path(), &opts) {
            Err(DatasetError::NonNumeric { column, row, .. }) => {
                assert_eq!(column, "b");
                assert_eq!(row, 1);
            }
            other => panic!("expected NonNumeric, got {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_error() {
        let f = write_temp("a,b\n1,2\n3\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::default()),
            Err(DatasetError::Csv(_))
        ));
    }

    #[test]
    fn auto_detection_keeps_strings_as_labels() {
        let f = write_temp("species,x\nAdelie,1\nGentoo,2\n,3\n");
        let m = load_csv(f.path(), &CsvOptions::default()).unwrap();
        assert_eq!((m.n(), m.p()), (3, 1));
        assert_eq!(m.labels().len(), 1);
        assert_eq!(m.labels()[0].values[0].as_deref(), Some("Adelie"));
        assert_eq!(m.labels()[0].values[2], None);
    }

    #[test]
    fn missing_markers_become_nan() {
        let f = write_temp("a,b\n1,1\nNA,2\nnan,3\n,4\n2,5\n");
        let m = load_csv(f.path(), &CsvOptions::default()).unwrap();
        let col = m.column(0);
        assert_eq!(m.n(), 5);
        assert!(col[1].is_nan() && col[2].is_nan() && col[3].is_nan());
        assert_eq!(m.column(1), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn drop_incomplete_removes_rows_and_is_idempotent() {
        let m = matrix(&[("a", &[1.0, f64::NAN, 3.0, 4.0]), ("b", &[1.0, 2.0, 3.0, 4.0])]);
        let d = drop_incomplete_rows(&m).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.column(0), &[1.0, 3.0, 4.0]);
        let dd = drop_incomplete_rows(&d).unwrap();
        assert_eq!(d, dd);
    }

    #[test]
    fn drop_incomplete_counts_missing_labels() {
        let m = matrix(&[("a", &[1.0, 2.0, 3.0])])
            .with_labels(vec![LabelColumn {
                name: "sex".into(),
                values: vec![Some("f".into()), None, Some("m".into())],
            }])
            .unwrap();
        let d = drop_incomplete_rows(&m).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.labels()[0].values.len(), 2);
    }

    #[test]
    fn drop_incomplete_degenerate_is_an_error() {
        let m = matrix(&[("a", &[1.0, f64::NAN])]);
        assert!(matches!(
            drop_incomplete_rows(&m),
            Err(DatasetError::InsufficientCompleteRows { left: 1, total: 2 })
        ));
    }

    #[test]
    fn zscale_forced_values() {
        let m = matrix(&[("a", &[1.0, 2.0, 3.0])]);
        let z = zscale(&m).unwrap();
        assert_abs_diff_eq!(z.column(0)[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.column(0)[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.column(0)[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zscale_two_point_column() {
        // mean 15, sd 50f64.sqrt(): values scale to -1/sqrt(2), 1/sqrt(2)
        let m = matrix(&[("a", &[10.0, 20.0])]);
        let z = zscale(&m).unwrap();
        assert_abs_diff_eq!(z.column(0)[0], -0.7071067811865476, epsilon = 1e-12);
        assert_abs_diff_eq!(z.column(0)[1], 0.7071067811865476, epsilon = 1e-12);
    }

    #[test]
    fn zscale_is_idempotent() {
        let m = matrix(&[("a", &[3.0, 1.0, 4.0, 1.0, 5.0]), ("b", &[9.0, 2.0, 6.0, 5.0, 3.0])]);
        let z1 = zscale(&m).unwrap();
        let z2 = zscale(&z1).unwrap();
        for g in 0..2 {
            for i in 0..5 {
                assert_abs_diff_eq!(z1.get(i, g), z2.get(i, g), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn zscale_constant_column_names_the_column() {
        let m = matrix(&[("x", &[1.0, 2.0]), ("flat", &[5.0, 5.0])]);
        match zscale(&m) {
            Err(DatasetError::ConstantColumn { name }) => assert_eq!(name, "flat"),
            other => panic!("expected ConstantColumn, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_numerically_identical() {
        let f = write_temp("a,b,tag\n0.1,-3.25e-7,u\n1e300,0.30000000000000004,v\nNA,7,\n");
        let m = load_csv(f.path(), &CsvOptions::default()).unwrap();
        let f2 = write_temp(&m.to_csv());
        let opts = CsvOptions {
            columns: Some(vec!["a".into(), "b".into()]),
            ..CsvOptions::default()
        };
        let m2 = load_csv(f2.path(), &opts).unwrap();
        assert_eq!(m.n(), m2.n());
        for g in 0..m.p() {
            for i in 0..m.n() {
                let (x, y) = (m.get(i, g), m2.get(i, g));
                assert!(x == y || (x.is_nan() && y.is_nan()), "mismatch at ({i},{g})");
            }
        }
        assert_eq!(m.labels(), m2.labels());
    }

    #[test]
    fn duplicate_column_names_rejected() {
        let f = write_temp("a,a\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::default()),
            Err(DatasetError::DuplicateColumn { .. })
        ));
    }

    #[test]
    fn filter_rows_keeps_labels_aligned() {
        let m = matrix(&[("a", &[1.0, 2.0, 3.0])])
            .with_labels(vec![LabelColumn {
                name: "s".into(),
                values: vec![Some("x".into()), Some("y".into()), Some("z".into())],
            }])
            .unwrap();
        let f = m.filter_rows(&[true, false, true]).unwrap();
        assert_eq!(f.column(0), &[1.0, 3.0]);
        assert_eq!(f.labels()[0].values[1].as_deref(), Some("z"));
    }
}
