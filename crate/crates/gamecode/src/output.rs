//! Artifact writers. JSON is pretty-printed with a trailing newline and
//! floats in shortest round-trip form, so identical inputs give identical
//! bytes.

use crate::error::{CliError, Result};
use serde::Serialize;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

/// Provenance fields embedded in every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug)]
pub struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Files written so far, in write order, without duplicates.
    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn record(&mut self, path: PathBuf) {
        if !self.written.contains(&path) {
            self.written.push(path);
        }
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.record(path.clone());
        Ok(path)
    }

    /// Writes `rows` with a header taken from the row type's field names.
    pub fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.record(path.clone());
        Ok(path)
    }

    /// Appends one row, writing the header first if the file is new or empty.
    pub fn append_csv<R: Serialize>(&mut self, name: &str, row: R) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let fresh = fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CliError::io(&path, e))?;
        let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        w.serialize(row)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.record(path.clone());
        Ok(path)
    }
}
