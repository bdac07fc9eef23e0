//! Audio ingestion and frame-level feature extraction.

pub mod audio;
pub mod codebook;
pub mod content;
pub mod mel;
pub mod pitch;
pub mod svcf;
pub mod wav;

pub use audio::{frame_count, AudioClip, FrameMatrix, HOP, SAMPLE_RATE, WINDOW};
pub use codebook::{fit_codebook, Codebook};
pub use content::{ContentFeature, ContentKind};
pub use mel::{extract_mel, MelAnalyzer, N_MELS};
pub use pitch::{extract_f0, extract_f0_with, PitchConfig, PitchTrack};
pub use svcf::FeatureKind;
pub use wav::{read_wav, write_wav};
