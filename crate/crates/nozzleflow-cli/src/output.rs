//! CSV and JSON artifacts under `output.dir`, plus the manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::error::CliError;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

/// RFC-4180 bytes with a header row and CRLF line ends.
pub fn csv_bytes(header: &[&str], rows: &[Vec<Cell>]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.iter().map(Cell::render)).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

pub struct Artifacts {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Write { path: dir.display().to_string(), source: e })?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Write { path: path.display().to_string(), source: e })?;
        self.files.push(FileEntry { name: name.to_string(), sha256: hex(&Sha256::digest(bytes)), bytes: bytes.len() });
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<(), CliError> {
        self.write(name, &csv_bytes(header, rows))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(mut self, subcommand: &str, cfg: &RunConfig) -> Result<PathBuf, CliError> {
        let manifest = json!({
            "tool": "nozzleflow",
            "cli_version": env!("CARGO_PKG_VERSION"),
            "library_version": nozzleflow::VERSION,
            "subcommand": subcommand,
            "config_hash": cfg.hash(),
            "config": cfg,
            "files": self.files,
        });
        self.json("manifest.json", &manifest)?;
        Ok(self.dir.join("manifest.json"))
    }
}
