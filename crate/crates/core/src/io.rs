//! CSV and JSON serialization. Writers only format; they never compute.
//!
//! CSV files use LF line endings and `.` as decimal separator. Densities are
//! written in scientific notation with 17 significant digits, which
//! round-trips every `f64`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::ExperimentReport;
use crate::sim::PopulationPath;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved parameters, keyed by their CLI/config names.
    pub parameters: serde_json::Map<String, serde_json::Value>,
    pub master_seed: u64,
    pub tool_version: String,
    /// Omitted from manifests embedded in reports so those stay
    /// byte-reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl RunManifest {
    pub fn new(command: &str, parameters: serde_json::Map<String, serde_json::Value>, master_seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            parameters,
            master_seed,
            tool_version: TOOL_VERSION.to_string(),
            wall_clock_seconds: None,
        }
    }

    pub fn with_duration(mut self, seconds: f64) -> Self {
        self.wall_clock_seconds = Some(seconds);
        self
    }

    pub fn without_duration(&self) -> Self {
        RunManifest {
            wall_clock_seconds: None,
            ..self.clone()
        }
    }
}

/// Full-precision float formatting used by every CSV writer.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_parent(dest: &Path) -> Result<()> {
    match dest.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

/// Writes a CSV table; `rows` must match the header width.
pub fn write_csv<I>(dest: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    create_parent(dest)?;
    let file = fs::File::create(dest).map_err(io_err(dest))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", header.join(",")).map_err(io_err(dest))?;
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Csv {
                path: dest.to_path_buf(),
                line: i + 2,
                message: format!("row has {} fields, header has {}", row.len(), header.len()),
            });
        }
        writeln!(out, "{}", row.join(",")).map_err(io_err(dest))?;
    }
    out.flush().map_err(io_err(dest))
}

pub const PATH_HEADER: [&str; 5] = ["n", "z1", "z2", "x1", "x2"];

/// Count-path rows `n,z1,z2,x1,x2`.
pub fn count_rows(counts: &[[u64; 2]], k: u64) -> impl Iterator<Item = Vec<String>> + '_ {
    let kf = k as f64;
    counts.iter().enumerate().map(move |(n, c)| {
        vec![
            n.to_string(),
            c[0].to_string(),
            c[1].to_string(),
            fmt_f64(c[0] as f64 / kf),
            fmt_f64(c[1] as f64 / kf),
        ]
    })
}

pub fn write_counts_csv(counts: &[[u64; 2]], k: u64, dest: &Path) -> Result<()> {
    write_csv(dest, &PATH_HEADER, count_rows(counts, k))
}

pub fn write_path_csv(path: &PopulationPath, dest: &Path) -> Result<()> {
    write_counts_csv(&path.counts, path.config.k, dest)
}

/// One parsed row of a path CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRow {
    pub n: usize,
    pub counts: [u64; 2],
    pub densities: [f64; 2],
}

pub fn read_path_csv(src: &Path) -> Result<Vec<PathRow>> {
    let text = fs::read_to_string(src).map_err(io_err(src))?;
    let csv_err = |line: usize, message: String| Error::Csv {
        path: src.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| csv_err(1, "empty file".into()))?;
    if header != PATH_HEADER.join(",") {
        return Err(csv_err(1, format!("unexpected header `{header}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let line_no = i + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(csv_err(line_no, format!("expected 5 fields, found {}", fields.len())));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|e| csv_err(line_no, format!("`{s}`: {e}")));
            let float = |s: &str| s.parse::<f64>().map_err(|e| csv_err(line_no, format!("`{s}`: {e}")));
            Ok(PathRow {
                n: int(fields[0])? as usize,
                counts: [int(fields[1])?, int(fields[2])?],
                densities: [float(fields[3])?, float(fields[4])?],
            })
        })
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, dest: &Path) -> Result<()> {
    create_parent(dest)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: dest.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(dest, text).map_err(io_err(dest))
}

pub fn read_json<T: DeserializeOwned>(src: &Path) -> Result<T> {
    let text = fs::read_to_string(src).map_err(io_err(src))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: src.to_path_buf(),
        source,
    })
}

pub fn write_report_json(report: &ExperimentReport, dest: &Path) -> Result<()> {
    write_json(report, dest)
}

pub fn read_report_json(src: &Path) -> Result<ExperimentReport> {
    read_json(src)
}

/// `dir/name`, for output files placed under `--out`.
pub fn output_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
