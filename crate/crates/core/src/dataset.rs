//! Turning analyzed clips into model inputs.

use crate::config::RunConfig;
use crate::confusion::PitchStats;
use crate::error::{Result, SvcError};
use crate::features::{extract_f0_with, extract_mel, fit_codebook, AudioClip, Codebook, ContentKind, FrameMatrix, PitchTrack};
use crate::model::{ModelDims, ModelMeta};
use crate::trainer::TrainingItem;
use svc_autograd::Exec;

/// Mel spectrogram and pitch track of one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipAnalysis {
    pub mel: FrameMatrix,
    pub pitch: PitchTrack,
}

pub fn analyze_clip(clip: &AudioClip, cfg: &RunConfig) -> ClipAnalysis {
    ClipAnalysis {
        mel: extract_mel(clip),
        pitch: extract_f0_with(clip, &cfg.features.pitch, Exec::default()),
    }
}

/// Codebook size actually fitted: the configured size, reduced so that every
/// center has at least ten frames.
pub fn effective_codebook_size(cfg: &RunConfig, total_frames: usize) -> Result<usize> {
    let k = cfg.features.codebook_size.min(total_frames / 10);
    if k < 2 {
        return Err(SvcError::InvalidInput(format!(
            "{total_frames} frames are too few for a codebook of at least 2 centers (need 20)"
        )));
    }
    Ok(k)
}

/// Fits the pseudo posteriorgram codebook when either encoder uses it.
pub fn fit_codebook_for(cfg: &RunConfig, mels: &[FrameMatrix]) -> Result<Option<Codebook>> {
    if !uses_codebook(cfg) {
        return Ok(None);
    }
    let total = mels.iter().map(FrameMatrix::frames).sum();
    let k = effective_codebook_size(cfg, total)?;
    fit_codebook(mels, k, cfg.seed).map(Some)
}

pub fn uses_codebook(cfg: &RunConfig) -> bool {
    cfg.features.content == ContentKind::PseudoPpg || cfg.features.reference == ContentKind::PseudoPpg
}

/// A feature of a kind computable from audio alone, or `None` for kinds that
/// must be loaded from a file.
pub fn derived_feature(kind: ContentKind, mel: &FrameMatrix, codebook: Option<&Codebook>) -> Result<Option<FrameMatrix>> {
    match kind {
        ContentKind::ExternalMel => Ok(Some(mel.clone())),
        ContentKind::PseudoPpg => {
            let cb = codebook.ok_or_else(|| SvcError::InvalidInput("pseudo_ppg features need a fitted codebook".into()))?;
            Ok(Some(cb.pseudo_content(mel)?.frames))
        }
        _ => Ok(None),
    }
}

/// A clip with its singer id, held in memory.
#[derive(Clone, Debug)]
pub struct LabeledClip {
    pub id: String,
    pub singer: String,
    pub clip: AudioClip,
}

/// Builds training items and model metadata from in-memory clips. Only
/// feature kinds derivable from audio are supported here.
pub fn in_memory_dataset(clips: &[LabeledClip], cfg: &RunConfig) -> Result<(Vec<TrainingItem>, ModelMeta)> {
    if clips.is_empty() {
        return Err(SvcError::InvalidInput("no clips given".into()));
    }
    let analyses: Vec<ClipAnalysis> = Exec::default().map(clips, |c| analyze_clip(&c.clip, cfg));
    let mels: Vec<FrameMatrix> = analyses.iter().map(|a| a.mel.clone()).collect();
    let codebook = fit_codebook_for(cfg, &mels)?;
    let mut singers: Vec<String> = clips.iter().map(|c| c.singer.clone()).collect();
    singers.sort();
    singers.dedup();
    let mut items = Vec::with_capacity(clips.len());
    for (c, a) in clips.iter().zip(&analyses) {
        let feature = |kind| {
            derived_feature(kind, &a.mel, codebook.as_ref())?
                .ok_or_else(|| SvcError::MissingFeatures(format!("{kind} features for {} must be loaded from files", c.id)))
        };
        let singer = singers.iter().position(|s| *s == c.singer).expect("singer listed");
        items.push(TrainingItem::new(
            c.id.clone(),
            singer,
            feature(cfg.features.content)?,
            feature(cfg.features.reference)?,
            a.pitch.clone(),
            c.clip.samples().to_vec(),
        )?);
    }
    let meta = meta_for(&items, singers, codebook);
    Ok((items, meta))
}

/// Metadata for a set of training items.
pub fn meta_for(items: &[TrainingItem], singers: Vec<String>, codebook: Option<Codebook>) -> ModelMeta {
    ModelMeta {
        dims: ModelDims {
            content_dim: items[0].content.dim(),
            reference_dim: items[0].reference.dim(),
            num_singers: singers.len(),
        },
        singers,
        pitch_stats: PitchStats::fit(items.iter().map(|i| &i.pitch)),
        codebook,
    }
}
