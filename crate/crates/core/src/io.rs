//! File formats: headerless CSV matrices, the tidy per-trial table and JSON.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::montecarlo::TrialRecord;

/// Column order of the tidy trial table.
pub const TRIAL_COLUMNS: [&str; 13] = [
    "n", "m", "beta", "tau", "trial", "lambda_emp", "lambda_bar", "centered_err", "u_overlap",
    "u_cross_max", "v_overlap", "v_cross_max", "bulk_top",
];

/// Parses a headerless, comma-separated numeric matrix, one row per line.
pub fn parse_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {c}",
                    line + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            let value: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: '{field}' is not a number", line + 1)))?;
            if !value.is_finite() {
                return Err(Error::Parse(format!("row {}: non-finite entry '{field}'", line + 1)));
            }
            data.push(value);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse("matrix file is empty".into()))?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix_csv(File::open(path)?)
}

/// Writes a matrix as headerless CSV using shortest round-trip formatting.
pub fn format_matrix_csv<W: Write>(matrix: &DMatrix<f64>, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..matrix.nrows() {
        wtr.write_record((0..matrix.ncols()).map(|j| matrix[(i, j)].to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_matrix_csv(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    format_matrix_csv(matrix, BufWriter::new(File::create(path)?))
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes one row per (trial, spike). A trial without spikes gets a single
/// row with the spike columns empty.
pub fn format_trials_csv<W: Write>(records: &[TrialRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(TRIAL_COLUMNS)?;
    for rec in records {
        let head = [rec.n.to_string(), rec.m.to_string(), rec.beta.to_string()];
        if rec.spikes.is_empty() {
            let mut row: Vec<String> = head.to_vec();
            row.push(String::new());
            row.push(rec.trial.to_string());
            row.extend(std::iter::repeat_n(String::new(), 7));
            row.push(rec.bulk_top.to_string());
            wtr.write_record(&row)?;
            continue;
        }
        for s in &rec.spikes {
            let mut row: Vec<String> = head.to_vec();
            row.extend([
                s.tau.to_string(),
                rec.trial.to_string(),
                s.lambda_emp.to_string(),
                s.lambda_bar.to_string(),
                s.centered_err.to_string(),
                s.u_overlap.to_string(),
                opt(s.u_cross_max),
                s.v_overlap.to_string(),
                opt(s.v_cross_max),
                rec.bulk_top.to_string(),
            ]);
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_trials_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    format_trials_csv(records, BufWriter::new(File::create(path)?))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
