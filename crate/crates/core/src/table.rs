//! CSV output tables. Numbers are written with six significant digits; an
//! optional `.full.csv` sidecar carries shortest round-trip precision.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rust_decimal::Decimal;

use crate::error::{Error, Result};

pub const SIGNIFICANT_DIGITS: usize = 6;

/// Rounds to six significant digits, rendered without an exponent unless the
/// magnitude is below 1e-4 or at least 1e15.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return fmt_full(v);
    }
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v)
        .parse()
        .expect("formatted float parses");
    fmt_full(rounded)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_full(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn parse_decimal(s: &str) -> Result<Decimal> {
    Decimal::from_str(s)
        .or_else(|_| Decimal::from_scientific(s))
        .map_err(|e| Error::Data(format!("`{s}` is not a decimal number: {e}")))
}

/// `a - b` computed exactly on the decimal strings, as the difference of
/// the two printed columns.
pub fn decimal_difference(a: &str, b: &str) -> Result<String> {
    let d = parse_decimal(a)? - parse_decimal(b)?;
    Ok(d.normalize().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    /// A value whose six-digit text is fixed by the caller, with its full
    /// precision counterpart for the sidecar.
    Exact {
        text: String,
        full: f64,
    },
    Empty,
}

impl Cell {
    fn render(&self, full: bool) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(v) if full => fmt_full(*v),
            Cell::Num(v) => fmt_num(*v),
            Cell::Exact { full: v, .. } if full => fmt_full(*v),
            Cell::Exact { text, .. } => text.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn has_full(&self) -> bool {
        matches!(self, Cell::Num(_) | Cell::Exact { .. })
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<u8> for Cell {
    fn from(v: u8) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
    path.with_file_name(format!("{stem}.full.csv"))
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn to_csv(&self, full: bool) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.render(full)))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Writes `path` and, when `full_precision` is set and the table holds
    /// numbers, a `.full.csv` sidecar next to it. Returns the files written.
    pub fn write(&self, path: &Path, full_precision: bool) -> Result<Vec<PathBuf>> {
        fs::write(path, self.to_csv(false)).map_err(|e| Error::io(path, e))?;
        let mut written = vec![path.to_path_buf()];
        if full_precision && self.rows.iter().flatten().any(Cell::has_full) {
            let side = sidecar_path(path);
            fs::write(&side, self.to_csv(true)).map_err(|e| Error::io(&side, e))?;
            written.push(side);
        }
        Ok(written)
    }
}

/// A CSV file read back as strings.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let i = self.column_index(name).ok_or_else(|| Error::Schema {
            path: PathBuf::new(),
            column: name.to_string(),
        })?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    /// Numeric column; empty cells become NaN.
    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .into_iter()
            .map(|s| {
                if s.is_empty() {
                    Ok(f64::NAN)
                } else {
                    s.parse::<f64>()
                        .map_err(|_| Error::Data(format!("column {name}: `{s}` is not a number")))
                }
            })
            .collect()
    }
}

pub fn parse_csv_str(text: &str) -> Result<CsvTable> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| Error::Data(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(CsvTable { header, rows })
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_str(&text).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}
