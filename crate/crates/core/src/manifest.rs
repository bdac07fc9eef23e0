//! Dataset manifests: one JSON object per line with `audio`, `singer`,
//! `domain` and an optional `features` object pointing at precomputed
//! external feature files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SvcError};
use crate::rng::{mix, purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Speech,
    Singing,
}

/// Paths of externally computed `SVCF` files for one clip.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalFeatures {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub audio: PathBuf,
    pub singer: String,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<ExternalFeatures>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

/// Deterministic 90/5/5 partition of a manifest.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<ManifestEntry>,
    pub valid: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

impl Manifest {
    /// Parses JSONL; blank lines are skipped and relative paths resolve
    /// against the manifest's directory.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |reason: String| SvcError::Manifest {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let mut entry: ManifestEntry = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            if entry.singer.is_empty() {
                return Err(err("empty singer id".into()));
            }
            entry.audio = base.join(&entry.audio);
            if let Some(f) = entry.features.as_mut() {
                for p in [&mut f.content, &mut f.reference, &mut f.pitch].into_iter().flatten() {
                    *p = base.join(&*p);
                }
            }
            if !seen.insert(entry.audio.clone()) {
                return Err(err(format!("duplicate audio path {}", entry.audio.display())));
            }
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(SvcError::io(format!("reading manifest {}", path.display())))?;
        Self::parse(&text, path)
    }

    /// JSONL text with paths as stored.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{}", serde_json::to_string(e).expect("entry serializes"));
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Sorted distinct singer ids; a singer's index is its position here.
    pub fn singers(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.singer.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Assigns each entry by a hash of its audio path and `seed`: buckets
    /// 0..90 train, 90..95 validation, 95..100 test.
    pub fn split(&self, seed: u64) -> Split {
        let mut split = Split::default();
        for e in &self.entries {
            match split_bucket(&e.audio, seed) {
                0..90 => split.train.push(e.clone()),
                90..95 => split.valid.push(e.clone()),
                _ => split.test.push(e.clone()),
            }
        }
        split
    }
}

/// Bucket in `0..100` for a path under `seed`.
pub fn split_bucket(path: &Path, seed: u64) -> u64 {
    let digest = Sha256::digest(path.to_string_lossy().as_bytes());
    let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    mix(&[seed, purpose::SPLIT, h]) % 100
}
