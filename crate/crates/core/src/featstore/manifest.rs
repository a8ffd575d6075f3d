//! Dataset manifests: JSON documents describing a feature dataset.
//!
//! ```json
//! {
//!   "dataset": "clinc",
//!   "num_classes": 150,
//!   "classes": { "0": "accept_reservations", "1": "account_blocked" },
//!   "splits": {
//!     "train": { "path": "train.kldf", "rows": 10000 },
//!     "test":  { "path": "test.kldf",  "rows": 750 }
//!   },
//!   "provenance": { "model": "facebook/bart-base", "pooling": "mean", "seed": 0 }
//! }
//! ```
//!
//! Relative split paths are resolved against the manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::kldf::read_features;
use crate::batch::{ClassId, FeatureBatch};
use crate::codec;
use crate::error::{KldaError, Result};

pub const TRAIN_SPLIT: &str = "train";
pub const TEST_SPLIT: &str = "test";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub path: PathBuf,
    pub rows: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Feature extractor identifier, e.g. a checkpoint name.
    pub model: String,
    /// Layer / pooling descriptor.
    pub pooling: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset: String,
    pub num_classes: u32,
    pub classes: BTreeMap<ClassId, String>,
    pub splits: BTreeMap<String, SplitEntry>,
    #[serde(default)]
    pub provenance: Provenance,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// One problem found by [`validate_manifest`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ClassCount {
        declared: u32,
        listed: usize,
    },
    MissingSplit(String),
    MissingFile {
        split: String,
        path: PathBuf,
    },
    UnreadableFile {
        split: String,
        reason: String,
    },
    RowCount {
        split: String,
        declared: u64,
        found: u64,
    },
    LabelOutOfRange {
        split: String,
        label: ClassId,
    },
    WidthMismatch {
        split: String,
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ClassCount { declared, listed } => {
                write!(
                    f,
                    "num_classes is {declared} but {listed} classes are listed"
                )
            }
            Violation::MissingSplit(s) => write!(f, "required split {s:?} is missing"),
            Violation::MissingFile { split, path } => {
                write!(f, "split {split:?}: file {} does not exist", path.display())
            }
            Violation::UnreadableFile { split, reason } => {
                write!(f, "split {split:?}: {reason}")
            }
            Violation::RowCount {
                split,
                declared,
                found,
            } => write!(
                f,
                "split {split:?}: manifest declares {declared} rows, file has {found}"
            ),
            Violation::LabelOutOfRange { split, label } => {
                write!(
                    f,
                    "split {split:?}: label {label} is not in the class table"
                )
            }
            Violation::WidthMismatch {
                split,
                expected,
                found,
            } => write!(f, "split {split:?}: width {found} differs from {expected}"),
        }
    }
}

impl DatasetManifest {
    pub fn new(
        dataset: impl Into<String>,
        classes: BTreeMap<ClassId, String>,
        splits: BTreeMap<String, SplitEntry>,
        provenance: Provenance,
    ) -> Self {
        Self {
            dataset: dataset.into(),
            num_classes: classes.len() as u32,
            classes,
            splits,
            provenance,
            base_dir: PathBuf::new(),
        }
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: DatasetManifest = serde_json::from_str(text)?;
        m.base_dir = base_dir.into();
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| KldaError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        codec::write_atomic(path, text.as_bytes())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn split_path(&self, split: &str) -> Option<PathBuf> {
        self.splits.get(split).map(|s| self.base_dir.join(&s.path))
    }

    pub fn load_split(&self, split: &str) -> Result<FeatureBatch> {
        let path = self
            .split_path(split)
            .ok_or_else(|| KldaError::Config(format!("manifest has no {split:?} split")))?;
        read_features(&path)
    }
}

/// Checks class table consistency, file existence, split row counts, label
/// ranges and width agreement. An empty list means the dataset is valid.
pub fn validate_manifest(manifest: &DatasetManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    if manifest.num_classes as usize != manifest.classes.len() {
        out.push(Violation::ClassCount {
            declared: manifest.num_classes,
            listed: manifest.classes.len(),
        });
    }
    for required in [TRAIN_SPLIT, TEST_SPLIT] {
        if !manifest.splits.contains_key(required) {
            out.push(Violation::MissingSplit(required.to_string()));
        }
    }
    let mut width: Option<usize> = None;
    for (name, entry) in &manifest.splits {
        let path = manifest.base_dir.join(&entry.path);
        if !path.is_file() {
            out.push(Violation::MissingFile {
                split: name.clone(),
                path,
            });
            continue;
        }
        let batch = match read_features(&path) {
            Ok(b) => b,
            Err(e) => {
                out.push(Violation::UnreadableFile {
                    split: name.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if batch.nrows() as u64 != entry.rows {
            out.push(Violation::RowCount {
                split: name.clone(),
                declared: entry.rows,
                found: batch.nrows() as u64,
            });
        }
        let unknown: BTreeSet<ClassId> = batch
            .labels()
            .iter()
            .copied()
            .filter(|l| !manifest.classes.contains_key(l))
            .collect();
        out.extend(unknown.into_iter().map(|label| Violation::LabelOutOfRange {
            split: name.clone(),
            label,
        }));
        match width {
            None => width = Some(batch.width()),
            Some(w) if w != batch.width() => out.push(Violation::WidthMismatch {
                split: name.clone(),
                expected: w,
                found: batch.width(),
            }),
            Some(_) => {}
        }
    }
    out
}

/// Parses the manifest at `path` and validates it.
pub fn validate_manifest_file(path: &Path) -> Result<Vec<Violation>> {
    Ok(validate_manifest(&DatasetManifest::load(path)?))
}
