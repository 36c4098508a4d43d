//! CSV ingestion and window extraction.
//!
//! Rows with missing or non-finite values are rejected (dropped, with their
//! file line numbers recorded), never imputed. Text in a numeric cell is a
//! hard parse error. Column indices are 1-based throughout the public
//! surface, matching how users count columns in a file.

use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::DataMatrix;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: cannot parse {value:?} as a number")]
    Parse { line: u64, column: usize, value: String },
    #[error("line {line}: row has {got} fields, expected {expected}")]
    RaggedRows { line: u64, got: usize, expected: usize },
    #[error("no usable data rows in {path}")]
    EmptyFile { path: String },
    #[error("column {column} is constant; cannot standardize")]
    ConstantColumn { column: usize },
    #[error("window selects no columns")]
    EmptyWindow,
    #[error("column index {index} outside [1, {p}]")]
    ColumnOutOfRange { index: usize, p: usize },
    #[error("window range {start}:{end} is inverted")]
    InvertedRange { start: usize, end: usize },
}

/// Parsed observations-by-variables table.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub values: DataMatrix,
    pub column_labels: Option<Vec<String>>,
    pub source: String,
    /// File line numbers of rows dropped for missing or non-finite values.
    pub rejected_rows: Vec<u64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }
}

/// Load a rectangular numeric CSV.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    delimiter: char,
) -> Result<Dataset, IngestError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .delimiter(delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io {
                path: path_str.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => IngestError::EmptyFile { path: path_str.clone() },
        })?;

    let column_labels = if has_header {
        let headers = reader.headers().map_err(|_| IngestError::EmptyFile {
            path: path_str.clone(),
        })?;
        Some(headers.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };

    let mut width: Option<usize> = column_labels.as_ref().map(Vec::len);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rejected_rows = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Io {
            path: path_str.clone(),
            source: std::io::Error::other(e.to_string()),
        })?;
        let line = record.position().map(|pos| pos.line()).unwrap_or(0);
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(IngestError::RaggedRows { line, got: record.len(), expected });
        }

        let mut parsed = Vec::with_capacity(expected);
        let mut reject = false;
        for (col, field) in record.iter().enumerate() {
            if field.is_empty() {
                reject = true; // missing value
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push(v),
                Ok(_) => reject = true, // nan / inf
                Err(_) => {
                    return Err(IngestError::Parse {
                        line,
                        column: col + 1,
                        value: field.to_string(),
                    })
                }
            }
        }
        if reject {
            rejected_rows.push(line);
        } else {
            rows.push(parsed);
        }
    }

    if rows.is_empty() {
        return Err(IngestError::EmptyFile { path: path_str });
    }
    let n = rows.len();
    let p = rows[0].len();
    let values = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    Ok(Dataset { values, column_labels, source: path_str, rejected_rows })
}

/// Column selection, 1-based inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WindowColumns {
    Range { start: usize, end: usize },
    List(Vec<usize>),
}

/// A window of columns plus the standardization switch (on by default).
#[derive(Debug, Clone)]
pub struct WindowSpec {
    pub columns: WindowColumns,
    pub standardize: bool,
}

impl WindowSpec {
    pub fn range(start: usize, end: usize) -> Self {
        Self { columns: WindowColumns::Range { start, end }, standardize: true }
    }

    pub fn full(p: usize) -> Self {
        Self::range(1, p)
    }

    /// Resolve to 0-based column indices, validating bounds.
    pub fn resolve(&self, p: usize) -> Result<Vec<usize>, IngestError> {
        let indices: Vec<usize> = match &self.columns {
            WindowColumns::Range { start, end } => {
                if start > end {
                    return Err(IngestError::InvertedRange { start: *start, end: *end });
                }
                (*start..=*end).collect()
            }
            WindowColumns::List(list) => list.clone(),
        };
        if indices.is_empty() {
            return Err(IngestError::EmptyWindow);
        }
        for &idx in &indices {
            if idx < 1 || idx > p {
                return Err(IngestError::ColumnOutOfRange { index: idx, p });
            }
        }
        Ok(indices.iter().map(|i| i - 1).collect())
    }
}

/// Extract window columns, optionally centering by the window-local mean and
/// scaling by the window-local standard deviation (1/(n-1) denominator).
pub fn extract_window(d: &Dataset, w: &WindowSpec) -> Result<DataMatrix, IngestError> {
    let cols = w.resolve(d.p())?;
    let n = d.n();
    let mut out = DMatrix::<f64>::zeros(n, cols.len());
    for (dst, &src) in cols.iter().enumerate() {
        out.set_column(dst, &d.values.column(src));
    }
    if w.standardize {
        for (dst, &src) in cols.iter().enumerate() {
            let mut col = out.column_mut(dst);
            let mean = col.sum() / n as f64;
            let var =
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
            let sd = var.sqrt();
            if sd <= 1e-12 * (1.0 + mean.abs()) {
                return Err(IngestError::ConstantColumn { column: src + 1 });
            }
            for v in col.iter_mut() {
                *v = (*v - mean) / sd;
            }
        }
    }
    Ok(out)
}

/// 1-based indices of the k columns with the largest marginal variance on the
/// raw ingested values; ties break toward the lower index.
pub fn top_variance_columns(d: &Dataset, k: usize) -> Vec<usize> {
    let n = d.n();
    let mut scored: Vec<(usize, f64)> = (0..d.p())
        .map(|j| {
            let col = d.values.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (n as f64 - 1.0).max(1.0);
            (j + 1, var)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    let mut cols: Vec<usize> = scored.into_iter().map(|(j, _)| j).collect();
    cols.sort_unstable();
    cols
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn loads_plain_numeric_file() {
        let f = write_temp("1,2\n3,4\n5,6\n");
        let d = load_csv(f.path(), false, ',').unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.p(), 2);
        assert!(d.column_labels.is_none());
        assert_eq!(d.values[(2, 1)], 6.0);
    }

    #[test]
    fn header_becomes_labels() {
        let f = write_temp("a,b\n1,2\n3,4\n");
        let d = load_csv(f.path(), true, ',').unwrap();
        assert_eq!(d.column_labels.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));
        assert_eq!(d.n(), 2);
    }

    #[test]
    fn text_cell_is_a_parse_error() {
        let f = write_temp("1,2\n3,oops\n");
        match load_csv(f.path(), false, ',') {
            Err(IngestError::Parse { line, column, value }) => {
                assert_eq!(line, 2);
                assert_eq!(column, 2);
                assert_eq!(value, "oops");
            }
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_and_nonfinite_rows_are_rejected_with_lines() {
        let f = write_temp("1,2\n3,\nnan,4\n5,6\n");
        let d = load_csv(f.path(), false, ',').unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.rejected_rows, vec![2, 3]);
    }

    #[test]
    fn ragged_rows_error() {
        let f = write_temp("1,2\n3,4,5\n");
        assert!(matches!(
            load_csv(f.path(), false, ','),
            Err(IngestError::RaggedRows { line: 2, got: 3, expected: 2 })
        ));
    }

    #[test]
    fn empty_file_error() {
        let f = write_temp("");
        assert!(matches!(load_csv(f.path(), false, ','), Err(IngestError::EmptyFile { .. })));
    }

    #[test]
    fn extract_standardizes_to_zero_mean_unit_sd() {
        let f = write_temp("1,10\n2,20\n3,40\n4,80\n");
        let d = load_csv(f.path(), false, ',').unwrap();
        let x = extract_window(&d, &WindowSpec::full(2)).unwrap();
        let n = 4.0;
        for j in 0..2 {
            let mean = x.column(j).sum() / n;
            let var = x.column(j).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn extract_without_standardization_copies_columns() {
        let f = write_temp("1,10\n2,20\n3,40\n");
        let d = load_csv(f.path(), false, ',').unwrap();
        let mut w = WindowSpec::range(2, 2);
        w.standardize = false;
        let x = extract_window(&d, &w).unwrap();
        assert_eq!(x.ncols(), 1);
        assert_eq!(x[(0, 0)], 10.0);
        assert_eq!(x[(2, 0)], 40.0);
    }

    #[test]
    fn constant_column_is_reported() {
        let f = write_temp("1,7\n2,7\n3,7\n");
        let d = load_csv(f.path(), false, ',').unwrap();
        assert!(matches!(
            extract_window(&d, &WindowSpec::full(2)),
            Err(IngestError::ConstantColumn { column: 2 })
        ));
    }

    #[test]
    fn window_bounds_validation() {
        let f = write_temp("1,2\n3,4\n");
        let d = load_csv(f.path(), false, ',').unwrap();
        assert!(matches!(
            extract_window(&d, &WindowSpec::range(1, 3)),
            Err(IngestError::ColumnOutOfRange { index: 3, p: 2 })
        ));
        assert!(matches!(
            extract_window(&d, &WindowSpec::range(2, 1)),
            Err(IngestError::InvertedRange { .. })
        ));
        let empty = WindowSpec { columns: WindowColumns::List(vec![]), standardize: true };
        assert!(matches!(extract_window(&d, &empty), Err(IngestError::EmptyWindow)));
    }

    #[test]
    fn top_variance_selects_spread_columns() {
        let f = write_temp("1,100,5\n2,200,5.1\n3,400,4.9\n4,800,5.05\n");
        let d = load_csv(f.path(), false, ',').unwrap();
        assert_eq!(top_variance_columns(&d, 1), vec![2]);
        assert_eq!(top_variance_columns(&d, 2), vec![1, 2]);
    }
}
