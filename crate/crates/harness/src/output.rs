//! Result tables, metadata and the files they are written to.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hiernet::risk::RISK_CONVENTION;
use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Optional numbers are written as empty fields.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Text,
    Integer,
    /// A finite nonnegative number, or empty when the run produced none.
    Risk,
    Number,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: &'static str,
    pub kind: ColumnKind,
}

pub const fn col(name: &'static str, kind: ColumnKind) -> Column {
    Column { name, kind }
}

/// A CSV table with a fixed schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file: String,
    pub columns: &'static [Column],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: impl Into<String>, columns: &'static [Column]) -> Self {
        Self {
            file: file.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width differs from the schema of {}",
            self.file
        );
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name))?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("fields are UTF-8"))
    }
}

/// Checks that `text` has exactly the header `columns` and that every field
/// parses as its column's kind.
pub fn check_schema(text: &str, columns: &[Column]) -> Result<usize> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let expected: Vec<&str> = columns.iter().map(|c| c.name).collect();
    if header != expected {
        return Err(HarnessError::Schema(format!(
            "header {header:?}, expected {expected:?}"
        )));
    }
    let mut rows = 0;
    for (line, record) in r.records().enumerate() {
        let record = record?;
        for (field, c) in record.iter().zip(columns) {
            let ok = match c.kind {
                ColumnKind::Text => true,
                ColumnKind::Integer => field.parse::<i64>().is_ok(),
                ColumnKind::Number => field.parse::<f64>().is_ok(),
                ColumnKind::Risk => field.is_empty() || field.parse::<f64>().is_ok_and(|v| v.is_finite() && v >= 0.0),
            };
            if !ok {
                return Err(HarnessError::Schema(format!(
                    "row {}: column {} holds {field:?}",
                    line + 1,
                    c.name
                )));
            }
        }
        rows += 1;
    }
    Ok(rows)
}

/// Everything a suite produces; nothing here depends on timing except `metadata`.
#[derive(Clone, Debug)]
pub struct SuiteOutput {
    pub tables: Vec<Table>,
    /// Extra JSON artifacts, file name to value.
    pub json: Vec<(String, Value)>,
    /// Suite-specific summary merged into the metadata file.
    pub summary: Value,
    pub cell_seconds: Vec<(String, f64)>,
    /// Runs the suite cannot do without that diverged; the files are still written.
    pub required_diverged: Vec<String>,
}

impl SuiteOutput {
    pub fn table(&self, file: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.file == file)
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    suite: &'a str,
    version: &'a str,
    seeds: &'a [u64],
    threads: usize,
    risk_convention: &'a str,
    started_unix_seconds: u64,
    wall_clock_seconds: f64,
    cells: Vec<CellTime<'a>>,
    summary: &'a Value,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct CellTime<'a> {
    cell: &'a str,
    seconds: f64,
}

/// Writes the tables, the JSON artifacts and `metadata.json` to `dir`,
/// checking every table against its schema after it is written.
pub fn write_suite(
    dir: &Path,
    cfg: &ExperimentConfig,
    output: &SuiteOutput,
    threads: usize,
    started: SystemTime,
    wall_clock: f64,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for table in &output.tables {
        let path = dir.join(&table.file);
        let text = table.to_csv()?;
        fs::write(&path, &text)?;
        check_schema(&fs::read_to_string(&path)?, table.columns)?;
        written.push(path);
    }
    for (name, value) in &output.json {
        let path = dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(value)?)?;
        written.push(path);
    }
    let meta = Metadata {
        suite: cfg.suite.name(),
        version: env!("CARGO_PKG_VERSION"),
        seeds: &cfg.seeds,
        threads,
        risk_convention: RISK_CONVENTION,
        started_unix_seconds: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        wall_clock_seconds: wall_clock,
        cells: output
            .cell_seconds
            .iter()
            .map(|(cell, seconds)| CellTime {
                cell,
                seconds: *seconds,
            })
            .collect(),
        summary: &output.summary,
        config: cfg,
    };
    let path = dir.join("metadata.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
    written.push(path);
    Ok(written)
}
