use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{ConsumptionMatrix, DataError, Result};

/// Column layout of the wide CSV format.
///
/// `consumer_id,label[,extra...],YYYY-MM-DD,...`; extra columns named in
/// `extra_columns` are accepted and skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub id_column: String,
    pub label_column: String,
    pub extra_columns: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id_column: "consumer_id".into(),
            label_column: "label".into(),
            extra_columns: vec!["synthetic".into()],
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<ConsumptionMatrix> {
    read_csv(File::open(path)?, schema)
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NaN" || cell == "nan"
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<ConsumptionMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(DataError::MalformedHeader("expected at least id and label columns".into()));
    }
    if header[0] != schema.id_column {
        return Err(DataError::MalformedHeader(format!(
            "first column is {:?}, expected {:?}",
            &header[0], schema.id_column
        )));
    }
    if header[1] != schema.label_column {
        return Err(DataError::MalformedHeader(format!(
            "second column is {:?}, expected {:?}",
            &header[1], schema.label_column
        )));
    }
    let mut first_date = 2;
    while first_date < header.len() && schema.extra_columns.iter().any(|c| c == &header[first_date]) {
        first_date += 1;
    }
    let mut dates: Vec<NaiveDate> = Vec::with_capacity(header.len() - first_date);
    for (col, name) in header.iter().enumerate().skip(first_date) {
        let date: NaiveDate = name.parse().map_err(|_| {
            DataError::MalformedHeader(format!("column {col} ({name:?}) is not an ISO-8601 date"))
        })?;
        if let Some(&previous) = dates.last() {
            if previous.succ_opt() != Some(date) {
                return Err(DataError::NonMonotoneDates { column: col, previous, date });
            }
        }
        dates.push(date);
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                found: record.len(),
                expected: header.len(),
            });
        }
        ids.push(record[0].to_string());
        labels.push(match &record[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(DataError::BadLabel {
                    row,
                    value: other.to_string(),
                })
            }
        });
        for col in first_date..record.len() {
            let cell = &record[col];
            if is_missing(cell) {
                values.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DataError::BadCell {
                row,
                column: header[col].to_string(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(DataError::InvalidReading {
                    row,
                    column: col - first_date,
                    value: v,
                });
            }
            values.push(Some(v));
        }
    }
    ConsumptionMatrix::new(ids, labels, dates, values)
}

pub fn save_csv(m: &ConsumptionMatrix, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_csv(m, std::io::BufWriter::new(file), None)
}

/// Writes the wide format. `extra` adds one named column after `label`, with
/// one value per row.
pub fn write_csv<W: Write>(
    m: &ConsumptionMatrix,
    writer: W,
    extra: Option<(&str, &[String])>,
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["consumer_id".to_string(), "label".to_string()];
    if let Some((name, _)) = extra {
        header.push(name.to_string());
    }
    header.extend(m.dates().iter().map(|d| d.format("%Y-%m-%d").to_string()));
    wtr.write_record(&header)?;
    for row in 0..m.n_rows() {
        let mut record = vec![m.consumer_ids()[row].clone(), m.labels()[row].to_string()];
        if let Some((_, values)) = extra {
            record.push(values[row].clone());
        }
        // `{}` on f64 prints the shortest string that parses back to the same bits.
        record.extend(m.row(row).iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}
