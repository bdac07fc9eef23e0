use rand::seq::index;
use rand::Rng;
use svc_autograd::Tensor;

use crate::error::{Result, SvcError};
use crate::features::{frame_count, FrameMatrix, PitchTrack, HOP};
use crate::rng::{mix, purpose, rng_for};

/// One clip with all frame-aligned training inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingItem {
    pub id: String,
    pub singer: usize,
    pub content: FrameMatrix,
    pub reference: FrameMatrix,
    pub pitch: PitchTrack,
    pub wave: Vec<f32>,
}

impl TrainingItem {
    /// Checks that every feature has the clip's frame count.
    pub fn new(
        id: impl Into<String>,
        singer: usize,
        content: FrameMatrix,
        reference: FrameMatrix,
        pitch: PitchTrack,
        wave: Vec<f32>,
    ) -> Result<Self> {
        let id = id.into();
        let frames = frame_count(wave.len());
        for (what, len) in [
            ("content", content.frames()),
            ("reference", reference.frames()),
            ("pitch", pitch.len()),
        ] {
            if len != frames {
                return Err(SvcError::InvalidInput(format!(
                    "{id}: {what} has {len} frames but the audio has {frames}"
                )));
            }
        }
        Ok(Self {
            id,
            singer,
            content,
            reference,
            pitch,
            wave,
        })
    }

    pub fn frames(&self) -> usize {
        self.pitch.len()
    }

    /// `len` frames from `start` with the matching `240 * len` samples.
    /// Samples past the end of the clip are zero.
    pub fn segment(&self, start: usize, len: usize) -> (FrameMatrix, FrameMatrix, PitchTrack, Vec<f32>) {
        let mut wave = vec![0.0; len * HOP];
        let from = (start * HOP).min(self.wave.len());
        let to = ((start + len) * HOP).min(self.wave.len());
        wave[..to - from].copy_from_slice(&self.wave[from..to]);
        (
            self.content.crop(start, len),
            self.reference.crop(start, len),
            self.pitch.crop(start, len),
            wave,
        )
    }
}

/// A stacked batch of equal-length segments.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B, T, D_c]`.
    pub content: Tensor<f32>,
    /// `[B, T, D_r]`.
    pub reference: Tensor<f32>,
    pub pitch: Vec<PitchTrack>,
    pub singers: Vec<usize>,
    /// `[B, 240 T]`.
    pub wave: Tensor<f32>,
    /// Negative-sampling seed per item.
    pub cpc_seeds: Vec<u64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.singers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singers.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.content.dim(1)
    }

    /// Stacks segments `(item, start)` of length `frames`.
    pub fn from_segments(items: &[&TrainingItem], starts: &[usize], frames: usize, cpc_seeds: Vec<u64>) -> Self {
        let mut content = Vec::new();
        let mut reference = Vec::new();
        let mut wave = Vec::new();
        let mut pitch = Vec::new();
        for (item, &start) in items.iter().zip(starts) {
            let (c, r, p, w) = item.segment(start, frames);
            content.extend(c.into_data());
            reference.extend(r.into_data());
            wave.extend(w);
            pitch.push(p);
        }
        let b = items.len();
        Self {
            content: Tensor::new(&[b, frames, items[0].content.dim()], content),
            reference: Tensor::new(&[b, frames, items[0].reference.dim()], reference),
            pitch,
            singers: items.iter().map(|i| i.singer).collect(),
            wave: Tensor::new(&[b, frames * HOP], wave),
            cpc_seeds,
        }
    }
}

/// Draws the batch for `step`: items without replacement when the set is
/// large enough, a random aligned window of up to `segment_frames` frames
/// per item, and per-item negative-sampling seeds. Depends only on
/// `(items, seed, step)`.
pub fn sample_batch(items: &[TrainingItem], seed: u64, step: u64, batch_size: usize, segment_frames: usize) -> Result<Batch> {
    if items.is_empty() {
        return Err(SvcError::InvalidInput("training set is empty".into()));
    }
    let mut rng = rng_for(&[seed, purpose::BATCH, step]);
    let picks: Vec<usize> = if items.len() >= batch_size {
        index::sample(&mut rng, items.len(), batch_size).into_vec()
    } else {
        (0..batch_size).map(|_| rng.random_range(0..items.len())).collect()
    };
    let chosen: Vec<&TrainingItem> = picks.iter().map(|&i| &items[i]).collect();
    let frames = chosen.iter().map(|i| i.frames()).min().unwrap_or(0).min(segment_frames);
    if frames == 0 {
        return Err(SvcError::InvalidInput("training clip with zero frames".into()));
    }
    let starts: Vec<usize> = chosen
        .iter()
        .enumerate()
        .map(|(i, item)| rng_for(&[seed, purpose::CROP, step, i as u64]).random_range(0..=item.frames() - frames))
        .collect();
    let cpc_seeds = (0..chosen.len()).map(|i| mix(&[seed, purpose::NEGATIVES, step, i as u64])).collect();
    Ok(Batch::from_segments(&chosen, &starts, frames, cpc_seeds))
}
