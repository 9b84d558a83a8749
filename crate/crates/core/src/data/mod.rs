//! Consumption data model: the per-consumer daily matrix with explicit
//! missing cells, gap detection, the seasonal calendar and min-max scaling.

mod calendar;
mod csv_io;
mod scaling;

pub use calendar::{Season, SeasonCalendar, SeasonKey};
pub use csv_io::{load_csv, read_csv, save_csv, write_csv, CsvSchema};
pub use scaling::{minmax_normalize, MinMaxScaler};

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Errors raised while building or reading consumption data.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-monotone dates at column {column}: {date} does not follow {previous} by one day")]
    NonMonotoneDates {
        column: usize,
        previous: NaiveDate,
        date: NaiveDate,
    },
    #[error("non-numeric cell {value:?} at row {row}, column {column}")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("invalid cell value {value} at row {row}, column {column}: readings must be finite and non-negative")]
    InvalidReading { row: usize, column: usize, value: f64 },
    #[error("label {value:?} at row {row} is not 0 or 1")]
    BadLabel { row: usize, value: String },
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix contains missing cells")]
    MissingPresent,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// Daily consumption readings for a set of consumers.
///
/// Cells are `Option<f64>`; `None` is a missing reading. Rows are consumers,
/// columns are consecutive calendar days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionMatrix {
    consumer_ids: Vec<String>,
    labels: Vec<u8>,
    dates: Vec<NaiveDate>,
    values: Vec<Option<f64>>,
}

impl ConsumptionMatrix {
    /// Builds a matrix from row-major cells, validating every invariant.
    pub fn new(
        consumer_ids: Vec<String>,
        labels: Vec<u8>,
        dates: Vec<NaiveDate>,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        if consumer_ids.len() != labels.len() {
            return Err(DataError::Shape(format!(
                "{} consumer ids but {} labels",
                consumer_ids.len(),
                labels.len()
            )));
        }
        if values.len() != consumer_ids.len() * dates.len() {
            return Err(DataError::Shape(format!(
                "{} cells for a {}x{} matrix",
                values.len(),
                consumer_ids.len(),
                dates.len()
            )));
        }
        for (row, &label) in labels.iter().enumerate() {
            if label > 1 {
                return Err(DataError::BadLabel {
                    row,
                    value: label.to_string(),
                });
            }
        }
        check_dates(&dates)?;
        let cols = dates.len();
        for (idx, cell) in values.iter().enumerate() {
            if let Some(v) = *cell {
                if !v.is_finite() || v < 0.0 {
                    return Err(DataError::InvalidReading {
                        row: idx / cols.max(1),
                        column: idx % cols.max(1),
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            consumer_ids,
            labels,
            dates,
            values,
        })
    }

    /// Builds a complete matrix from a dense array.
    pub fn from_dense(
        consumer_ids: Vec<String>,
        labels: Vec<u8>,
        dates: Vec<NaiveDate>,
        values: &Array2<f64>,
    ) -> Result<Self> {
        if values.nrows() != consumer_ids.len() || values.ncols() != dates.len() {
            return Err(DataError::Shape(format!(
                "dense array is {}x{}, expected {}x{}",
                values.nrows(),
                values.ncols(),
                consumer_ids.len(),
                dates.len()
            )));
        }
        let cells = values.iter().map(|&v| Some(v)).collect();
        Self::new(consumer_ids, labels, dates, cells)
    }

    pub fn n_rows(&self) -> usize {
        self.consumer_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.dates.len()
    }

    pub fn consumer_ids(&self) -> &[String] {
        &self.consumer_ids
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.n_cols() + col]
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        let cols = self.n_cols();
        &self.values[row * cols..(row + 1) * cols]
    }

    pub fn cells(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|c| c.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// Dense copy of the values; fails if any cell is missing.
    pub fn to_dense(&self) -> Result<Array2<f64>> {
        let cells: Option<Vec<f64>> = self.values.iter().copied().collect();
        let cells = cells.ok_or(DataError::MissingPresent)?;
        Array2::from_shape_vec((self.n_rows(), self.n_cols()), cells)
            .map_err(|e| DataError::Shape(e.to_string()))
    }

    /// Same consumers and dates, new cells.
    pub fn with_rows(&self, rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if rows.len() != self.n_rows() || rows.iter().any(|r| r.len() != self.n_cols()) {
            return Err(DataError::Shape("replacement rows do not match".into()));
        }
        Self::new(
            self.consumer_ids.clone(),
            self.labels.clone(),
            self.dates.clone(),
            rows.into_iter().flatten().collect(),
        )
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let cols = self.n_cols();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self {
            consumer_ids: rows.iter().map(|&r| self.consumer_ids[r].clone()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            dates: self.dates.clone(),
            values,
        }
    }
}

fn check_dates(dates: &[NaiveDate]) -> Result<()> {
    for (i, pair) in dates.windows(2).enumerate() {
        if pair[0].succ_opt() != Some(pair[1]) {
            return Err(DataError::NonMonotoneDates {
                column: i + 1,
                previous: pair[0],
                date: pair[1],
            });
        }
    }
    Ok(())
}

/// Consecutive calendar days starting at `start`.
pub fn daily_dates(start: NaiveDate, n_days: usize) -> Vec<NaiveDate> {
    start.iter_days().take(n_days).collect()
}

/// A maximal run of missing cells in one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Gap {
    pub row: usize,
    /// First missing column.
    pub start: usize,
    /// Number of consecutive missing days.
    pub len: usize,
}

impl Gap {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Maximal missing runs of a single row, as `(start, len)` pairs.
pub fn row_gaps(row: &[Option<f64>]) -> Vec<(usize, usize)> {
    let mut gaps = Vec::new();
    let mut run_start = None;
    for (i, cell) in row.iter().enumerate() {
        match (cell, run_start) {
            (None, None) => run_start = Some(i),
            (Some(_), Some(s)) => {
                gaps.push((s, i - s));
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        gaps.push((s, row.len() - s));
    }
    gaps
}

/// Every maximal missing run in the matrix, sorted by `(row, start)`.
pub fn detect_gaps(m: &ConsumptionMatrix) -> Vec<Gap> {
    (0..m.n_rows())
        .flat_map(|row| {
            row_gaps(m.row(row))
                .into_iter()
                .map(move |(start, len)| Gap { row, start, len })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn one_row(cells: Vec<Option<f64>>) -> ConsumptionMatrix {
        let dates = daily_dates(date("2015-01-01"), cells.len());
        ConsumptionMatrix::new(vec!["a".into()], vec![0], dates, cells).unwrap()
    }

    #[test]
    fn single_run() {
        let m = one_row(vec![Some(1.0), None, None, Some(2.0)]);
        assert_eq!(detect_gaps(&m), vec![Gap { row: 0, start: 1, len: 2 }]);
    }

    #[test]
    fn no_missing_no_gaps() {
        let m = one_row(vec![Some(1.0), Some(2.0)]);
        assert!(detect_gaps(&m).is_empty());
    }

    #[test]
    fn runs_at_both_edges() {
        let m = one_row(vec![None, Some(1.0), None]);
        assert_eq!(
            detect_gaps(&m),
            vec![
                Gap { row: 0, start: 0, len: 1 },
                Gap { row: 0, start: 2, len: 1 }
            ]
        );
    }

    #[test]
    fn rejects_negative_and_nan() {
        let dates = daily_dates(date("2015-01-01"), 2);
        assert!(ConsumptionMatrix::new(vec!["a".into()], vec![0], dates.clone(), vec![Some(-1.0), None]).is_err());
        assert!(ConsumptionMatrix::new(vec!["a".into()], vec![0], dates, vec![Some(f64::NAN), None]).is_err());
    }

    #[test]
    fn rejects_date_jump() {
        let dates = vec![date("2015-01-01"), date("2015-01-03")];
        let err = ConsumptionMatrix::new(vec!["a".into()], vec![0], dates, vec![None, None]).unwrap_err();
        assert!(matches!(err, DataError::NonMonotoneDates { column: 1, .. }));
    }
}
