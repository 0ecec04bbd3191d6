//! Benchmark manifests: a JSON list of `{"path", "target_column", "name"}`.
//! Relative paths are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use lder_core::{impute_mean, Dataset};
use serde::{Deserialize, Serialize};

use crate::csv_io::{load_csv, TargetColumn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    /// Defaults to the last column.
    #[serde(default)]
    pub target_column: Option<String>,
    /// Defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub base: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&s)?;
        if entries.is_empty() {
            return Err(Error::Format(format!("{}: manifest lists no datasets", path.display())));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { base, entries })
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base.join(&entry.path)
        }
    }

    /// Loads and mean-imputes every dataset, in manifest order.
    pub fn load_datasets(&self) -> Result<Vec<Dataset>> {
        self.entries
            .iter()
            .map(|e| {
                let target = TargetColumn::from_option(e.target_column.as_deref());
                let mut d = impute_mean(&load_csv(self.resolve(e), &target)?)?;
                if let Some(n) = &e.name {
                    d.name = n.clone();
                }
                Ok(d)
            })
            .collect()
    }
}
