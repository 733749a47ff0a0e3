//! File helpers: atomic writes and CSV plumbing shared by the data formats.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn parse_date(path: &Path, line: usize, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::parse(path, format!("line {line}: bad date {s:?}: {e}")))
}

pub fn parse_f64(path: &Path, line: usize, column: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("line {line}: column {column}: not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, format!("line {line}: column {column}: non-finite value")));
    }
    Ok(v)
}

/// Reads a headed CSV file and returns the records together with the
/// position of each requested column.
pub fn read_columns(path: &Path, columns: &[&str]) -> Result<(Vec<csv::StringRecord>, Vec<usize>)> {
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(|e| {
            match e.kind() {
                csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
                _ => Error::parse(path, e.to_string()),
            }
        })?;
    let headers = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    let mut idx = Vec::with_capacity(columns.len());
    for c in columns {
        let i = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(c))
            .ok_or_else(|| Error::parse(path, format!("missing column {c:?}")))?;
        idx.push(i);
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        records.push(rec.map_err(|e| Error::parse(path, e.to_string()))?);
    }
    Ok((records, idx))
}

/// Serializes rows into CSV text with a one-line header.
pub fn csv_string<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        let row: Vec<String> = row.into_iter().collect();
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
