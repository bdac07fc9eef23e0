//! `SVCF` feature files.
//!
//! Layout: the magic bytes `SVCF`, little-endian `u32` frame count `T`,
//! `u32` dimension `D`, one `u8` kind code, then `T * D` little-endian `f32`
//! values in row-major order.
//!
//! | code | kind               |
//! |------|--------------------|
//! | 0    | `pseudo_ppg`       |
//! | 1    | `external_ppg`     |
//! | 2    | `external_ppg_mid` |
//! | 3    | `external_hubert`  |
//! | 4    | `external_mel`     |
//! | 5    | pitch (`D = 2`: F0 in Hz, voicing flag) |

use std::fs;
use std::path::Path;

use super::audio::FrameMatrix;
use super::content::{ContentFeature, ContentKind};
use super::pitch::PitchTrack;
use crate::error::{Result, SvcError};

pub const MAGIC: &[u8; 4] = b"SVCF";
pub const HEADER_LEN: usize = 13;

/// What a feature file holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Content(ContentKind),
    Pitch,
}

impl FeatureKind {
    pub fn code(self) -> u8 {
        match self {
            FeatureKind::Content(ContentKind::PseudoPpg) => 0,
            FeatureKind::Content(ContentKind::ExternalPpg) => 1,
            FeatureKind::Content(ContentKind::ExternalPpgMid) => 2,
            FeatureKind::Content(ContentKind::ExternalHubert) => 3,
            FeatureKind::Content(ContentKind::ExternalMel) => 4,
            FeatureKind::Pitch => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => FeatureKind::Content(ContentKind::PseudoPpg),
            1 => FeatureKind::Content(ContentKind::ExternalPpg),
            2 => FeatureKind::Content(ContentKind::ExternalPpgMid),
            3 => FeatureKind::Content(ContentKind::ExternalHubert),
            4 => FeatureKind::Content(ContentKind::ExternalMel),
            5 => FeatureKind::Pitch,
            _ => return None,
        })
    }
}

pub fn encode(kind: FeatureKind, m: &FrameMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.frames() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    out.push(kind.code());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a feature file. Errors are plain reasons; callers attach the path.
pub fn decode(bytes: &[u8]) -> std::result::Result<(FeatureKind, FrameMatrix), String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!(
            "truncated header: expected {HEADER_LEN} bytes, found {}",
            bytes.len()
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err("bad magic; not an SVCF feature file".into());
    }
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let kind = FeatureKind::from_code(bytes[12]).ok_or_else(|| format!("unknown kind code {}", bytes[12]))?;
    if dim == 0 {
        return Err("feature dimension is 0".into());
    }
    let expected = frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or("header sizes overflow")?;
    if bytes.len() != expected {
        return Err(format!(
            "size mismatch: expected {expected} bytes for {frames} x {dim}, found {}",
            bytes.len()
        ));
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|v| v.is_nan()) {
        return Err(format!("NaN at frame {}, column {}", i / dim, i % dim));
    }
    Ok((kind, FrameMatrix::new(frames, dim, data)))
}

pub fn write(path: impl AsRef<Path>, kind: FeatureKind, m: &FrameMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(kind, m)).map_err(SvcError::io(format!("writing {}", path.display())))
}

pub fn read(path: impl AsRef<Path>) -> Result<(FeatureKind, FrameMatrix)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(SvcError::io(format!("reading {}", path.display())))?;
    decode(&bytes).map_err(|reason| SvcError::FeatureFile {
        path: path.to_path_buf(),
        reason,
    })
}

fn wrong_kind(path: &Path, found: FeatureKind, wanted: &str) -> SvcError {
    SvcError::FeatureFile {
        path: path.to_path_buf(),
        reason: format!("holds {found:?}, expected {wanted}"),
    }
}

/// Loads a content feature and aligns it to `frames` rows when given.
/// An `expected` kind, if set, must match the file.
pub fn load_content(path: impl AsRef<Path>, expected: Option<ContentKind>, frames: Option<usize>) -> Result<ContentFeature> {
    let path = path.as_ref();
    let (kind, m) = read(path)?;
    let kind = match kind {
        FeatureKind::Content(k) if expected.is_none_or(|e| e == k) => k,
        other => return Err(wrong_kind(path, other, expected.map_or("a content feature", ContentKind::as_str))),
    };
    let m = match frames {
        Some(t) => m.resample_nearest(t),
        None => m,
    };
    ContentFeature::new(kind, m)
}

pub fn load_pitch(path: impl AsRef<Path>) -> Result<PitchTrack> {
    let path = path.as_ref();
    match read(path)? {
        (FeatureKind::Pitch, m) => PitchTrack::from_matrix(&m),
        (other, _) => Err(wrong_kind(path, other, "pitch")),
    }
}
