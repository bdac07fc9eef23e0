//! Single-file checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content                                        |
//! |-------|------------------------------------------------|
//! | 4     | magic `SVCK`                                   |
//! | 4     | `u32` format version (1)                       |
//! | 8     | `u64` header length `H`                        |
//! | H     | UTF-8 JSON header                              |
//! | rest  | tensor blobs, `f32` row-major, back to back    |
//!
//! The header holds the run configuration, model metadata, step counters and
//! a tensor index of `{group, name, shape, offset, len}` entries, where
//! `offset` and `len` count `f32` values from the start of the blob region.
//! Groups are `generator`, `discriminator`, and `<group>.adam_m` /
//! `<group>.adam_v` for optimizer moments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, SvcError};
use crate::model::ModelMeta;

pub const MAGIC: &[u8; 4] = b"SVCK";
pub const FORMAT_VERSION: u32 = 1;
const PREFIX_LEN: usize = 16;

/// Version string of the build that wrote an artifact.
pub fn software_version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("SVC_GIT_DESCRIBE"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointInfo {
    pub software_version: String,
    pub config: RunConfig,
    pub meta: ModelMeta,
    /// Completed training steps.
    pub step: u64,
    pub generator_optimizer_steps: u64,
    pub discriminator_optimizer_steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorIndex {
    group: String,
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    info: CheckpointInfo,
    tensors: Vec<TensorIndex>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub group: String,
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub info: CheckpointInfo,
    pub tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let index = self
            .tensors
            .iter()
            .map(|t| {
                let entry = TensorIndex {
                    group: t.group.clone(),
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    offset,
                    len: t.data.len(),
                };
                offset += t.data.len();
                entry
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            info: self.info.clone(),
            tensors: index,
        })?;
        let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + 4 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: String| SvcError::Checkpoint(reason);
        if bytes.len() < PREFIX_LEN || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file (missing SVCK magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}; expected {FORMAT_VERSION}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let blob_start = PREFIX_LEN
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| bad(format!("header of {header_len} bytes runs past the end of the file")))?;
        let header: Header = serde_json::from_slice(&bytes[PREFIX_LEN..blob_start])
            .map_err(|e| bad(format!("malformed header: {e}")))?;
        let blobs = &bytes[blob_start..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for t in header.tensors {
            let expected: usize = t.shape.iter().product();
            if expected != t.len {
                return Err(bad(format!("tensor {}/{}: shape {:?} does not hold {} values", t.group, t.name, t.shape, t.len)));
            }
            let start = t.offset * 4;
            let end = start + t.len * 4;
            if end > blobs.len() {
                return Err(bad(format!(
                    "tensor {}/{} needs bytes {start}..{end} of the data region but only {} exist",
                    t.group,
                    t.name,
                    blobs.len()
                )));
            }
            let data = blobs[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push(NamedTensor {
                group: t.group,
                name: t.name,
                shape: t.shape,
                data,
            });
        }
        Ok(Self {
            info: header.info,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(SvcError::io(format!("writing {}", tmp.display())))?;
        std::fs::rename(&tmp, path).map_err(SvcError::io(format!("renaming to {}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(SvcError::io(format!("reading checkpoint {}", path.display())))?;
        Self::decode(&bytes)
    }

    /// Tensors of one group, in file order.
    pub fn group<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a NamedTensor> + 'a {
        self.tensors.iter().filter(move |t| t.group == group)
    }
}
