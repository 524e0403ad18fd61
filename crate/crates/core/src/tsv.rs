//! Tab-separated table reading and writing shared by every file format in the crate.
//!
//! Blank lines and lines starting with `#` are ignored. The first non-comment line is the
//! header.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub line: u64,
    pub fields: Vec<String>,
}

impl Row {
    pub fn get(&self, idx: usize) -> &str {
        self.fields.get(idx).map(|s| s.trim()).unwrap_or("")
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Table {
    pub header: Vec<String>,
    pub header_line: u64,
    pub rows: Vec<Row>,
}

#[derive(Debug, thiserror::Error)]
pub(crate) enum TsvError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

impl Table {
    /// Column index by header name, or a parse error at the header line.
    pub fn column(&self, name: &str) -> Result<usize, TsvError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TsvError::Parse {
                line: self.header_line,
                message: format!("missing column `{name}`"),
            })
    }
}

pub(crate) fn read_table<R: Read>(reader: R) -> Result<Table, TsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut header: Option<(Vec<String>, u64)> = None;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            TsvError::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fields: Vec<String> = rec.iter().map(str::to_owned).collect();
        if header.is_none() {
            header = Some((fields.into_iter().map(|f| f.trim().to_owned()).collect(), line));
            continue;
        }
        rows.push(Row { line, fields });
    }
    let (header, header_line) = header.ok_or(TsvError::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    for row in &rows {
        if row.fields.len() != header.len() {
            return Err(TsvError::Parse {
                line: row.line,
                message: format!(
                    "expected {} fields, found {}",
                    header.len(),
                    row.fields.len()
                ),
            });
        }
    }
    Ok(Table {
        header,
        header_line,
        rows,
    })
}

pub(crate) fn read_table_path(path: &Path) -> Result<Table, TsvError> {
    read_table(File::open(path)?)
}

pub(crate) fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(b'\t')
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Formats a float with the shortest representation that parses back to the same value.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub(crate) fn csv_io(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}
