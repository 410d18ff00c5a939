//! CSV tables with the config echoed as `# ` comment lines, written
//! atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: Table) {
        self.rows.extend(other.rows);
    }
}

/// Text of one CSV cell. Floats use the shortest representation that
/// parses back to the same value, in exponent form when very small or large.
pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        let a = self.abs();
        if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
            format!("{self:e}")
        } else {
            format!("{self}")
        }
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => {$(
        impl Cell for $t {
            fn cell(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
display_cell!(usize, u64, bool, str, String);

impl<T: Cell + ?Sized> Cell for &T {
    fn cell(&self) -> String {
        (**self).cell()
    }
}

/// Builds a row from mixed cell values.
#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => {
        vec![$($crate::output::Cell::cell(&$v)),*]
    };
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn render_csv(table: &Table, echo: Option<&ExperimentConfig>) -> Vec<u8> {
    let mut buf = Vec::new();
    if let Some(cfg) = echo {
        for line in cfg.to_toml().lines() {
            buf.extend_from_slice(b"# ");
            buf.extend_from_slice(line.as_bytes());
            buf.push(b'\n');
        }
    }
    let mut w = csv::Writer::from_writer(&mut buf);
    w.write_record(&table.columns).expect("in-memory write");
    for r in &table.rows {
        w.write_record(r).expect("in-memory write");
    }
    w.flush().expect("in-memory write");
    drop(w);
    buf
}

pub fn write_table(dir: &Path, table: &Table, echo: Option<&ExperimentConfig>) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{}.csv", table.name));
    write_atomic(&path, &render_csv(table, echo))?;
    Ok(path)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("summary serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// A CSV read back: header names plus string rows.
#[derive(Debug, Clone)]
pub struct CsvData {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvData {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| CliError::Input {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        let columns = r
            .headers()
            .map_err(|e| CliError::Input {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::Input {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| CliError::Input {
            path: self.path.clone(),
            reason: format!("missing column `{name}`"),
        })
    }

    pub fn number(&self, row: usize, col: usize) -> Result<f64, CliError> {
        let s = &self.rows[row][col];
        s.parse().map_err(|_| CliError::Input {
            path: self.path.clone(),
            reason: format!("row {}: `{s}` is not a number", row + 1),
        })
    }
}
