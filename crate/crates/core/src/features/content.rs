use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::audio::FrameMatrix;
use crate::error::{Result, SvcError};

/// Origin of a content or reference feature matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentKind {
    /// Codebook posteriors over mel frames, computed in-repo.
    PseudoPpg,
    ExternalPpg,
    ExternalPpgMid,
    ExternalHubert,
    /// Log-mel frames used directly as a feature.
    ExternalMel,
}

impl ContentKind {
    pub const ALL: [ContentKind; 5] = [
        ContentKind::PseudoPpg,
        ContentKind::ExternalPpg,
        ContentKind::ExternalPpgMid,
        ContentKind::ExternalHubert,
        ContentKind::ExternalMel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContentKind::PseudoPpg => "pseudo_ppg",
            ContentKind::ExternalPpg => "external_ppg",
            ContentKind::ExternalPpgMid => "external_ppg_mid",
            ContentKind::ExternalHubert => "external_hubert",
            ContentKind::ExternalMel => "external_mel",
        }
    }
}

impl fmt::Display for ContentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContentKind {
    type Err = SvcError;

    fn from_str(s: &str) -> Result<Self> {
        ContentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ContentKind::ALL.iter().map(|k| k.as_str()).collect();
                SvcError::InvalidInput(format!("unknown feature kind `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

/// Frame-aligned feature matrix with its origin.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentFeature {
    pub kind: ContentKind,
    pub frames: FrameMatrix,
}

impl ContentFeature {
    pub fn new(kind: ContentKind, frames: FrameMatrix) -> Result<Self> {
        if frames.dim() == 0 {
            return Err(SvcError::InvalidInput(format!("{kind} feature has dimension 0")));
        }
        if !frames.all_finite() {
            return Err(SvcError::InvalidInput(format!("{kind} feature contains non-finite values")));
        }
        Ok(Self { kind, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.frames()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.frames() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.dim()
    }

    /// Aligns to `frames` rows by nearest-frame repetition or decimation.
    pub fn aligned_to(&self, frames: usize) -> ContentFeature {
        ContentFeature {
            kind: self.kind,
            frames: self.frames.resample_nearest(frames),
        }
    }
}
