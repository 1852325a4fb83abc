//! Output plumbing shared by every subcommand.
//!
//! Files are written atomically (temp file in the target directory, then
//! rename) so an interrupted run never leaves a truncated artefact behind.
//! Nothing here embeds timestamps or machine identity: re-running a command
//! with an unchanged configuration must reproduce its outputs byte for byte.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use rumbench::{Error, Result};

/// Write `bytes` to `path` via a sibling temp file and an atomic rename.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::config(format!("cannot create {}: {e}", dir.display())))?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| Error::config(format!("cannot create temp file: {e}")))?;
    tmp.write_all(bytes)
        .and_then(|()| tmp.flush())
        .map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| Error::config(format!("cannot move into {}: {e}", path.display())))?;
    Ok(())
}

/// Serialise `value` as pretty JSON (with a trailing newline) to `path`.
pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// A rectangular table destined for a CSV file.
#[derive(Debug, Clone, Default)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Append a row; its width must match the header.
    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) -> Result<()> {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        if row.len() != self.headers.len() {
            return Err(Error::config(format!(
                "table row has {} cells, header has {}",
                row.len(),
                self.headers.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::config(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_csv()?.as_bytes())
    }
}

/// Render a float for a report: six significant digits, `NA` for NaN.
pub fn cell(value: f64) -> String {
    if value.is_nan() {
        "NA".to_string()
    } else {
        format!("{value:.6}")
    }
}

/// Stable 64-bit hash of a serialisable configuration, as fixed-width hex.
///
/// Used to key run directories so distinct configurations never collide and
/// identical ones land in the same place.
pub fn config_hash(value: &impl Serialize) -> Result<String> {
    let canonical = serde_json::to_string(value)?;
    let mut hasher = DefaultHasher::new();
    canonical.hash(&mut hasher);
    Ok(format!("{:016x}", hasher.finish()))
}

/// Directory for one command's outputs: `<base>/<command>-<hash prefix>`.
pub fn run_dir(base: impl AsRef<Path>, command: &str, hash: &str) -> PathBuf {
    base.as_ref().join(format!("{command}-{}", &hash[..8]))
}
