use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DURATION_S: f64 = 0.5;
pub const MAX_DURATION_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One word segment: a span of a feature file with its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub word: String,
    pub split: Split,
    pub feature_path: String,
    pub start_s: f64,
    pub end_s: f64,
    pub speaker: String,
}

impl ManifestRecord {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.end_s > self.start_s) {
            return Err(Error::Invalid(format!(
                "record {}: end_s {} must exceed start_s {}",
                self.id, self.end_s, self.start_s
            )));
        }
        Ok(())
    }
}

/// Keeps records whose duration lies in [0.5, 2.0] seconds, boundaries inclusive.
pub fn duration_filter(records: Vec<ManifestRecord>) -> Vec<ManifestRecord> {
    records
        .into_iter()
        .filter(|r| {
            let d = r.duration_s();
            // Boundaries are compared with a small slack so 0.5 s stored as 0.1 + 0.4 survives.
            d >= MIN_DURATION_S - 1e-9 && d <= MAX_DURATION_S + 1e-9
        })
        .collect()
}

pub fn write_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads JSON Lines. Blank lines are skipped; ids must be unique.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        rec.validate()?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::Format(format!(
                "{}:{}: duplicate id {:?}",
                path.display(),
                lineno + 1,
                rec.id
            )));
        }
        out.push(rec);
    }
    Ok(out)
}
