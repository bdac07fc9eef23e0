use crate::error::{Result, SvcError};

/// The only sample rate the pipeline accepts.
pub const SAMPLE_RATE: u32 = 24_000;
/// Frame shift: 10 ms.
pub const HOP: usize = 240;
/// Analysis window: 40 ms.
pub const WINDOW: usize = 960;

/// Number of analysis frames for a clip under center padding.
pub fn frame_count(num_samples: usize) -> usize {
    1 + num_samples / HOP
}

/// Validated mono clip at [`SAMPLE_RATE`].
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(SvcError::SampleRate {
                expected: SAMPLE_RATE,
                actual: sample_rate,
            });
        }
        if samples.is_empty() {
            return Err(SvcError::InvalidAudio("clip has no samples".into()));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(SvcError::InvalidAudio(format!(
                "sample {i} = {s} is outside [-1, 1]"
            )));
        }
        Ok(Self { samples })
    }

    /// Builds a clip after clamping to `[-1, 1]` and zeroing non-finite values.
    pub fn from_clamped(samples: Vec<f32>) -> Result<Self> {
        let samples = samples
            .into_iter()
            .map(|s| if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 })
            .collect();
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn frames(&self) -> usize {
        frame_count(self.samples.len())
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }
}

/// Row-major `frames x dim` matrix of `f32` features.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMatrix {
    frames: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FrameMatrix {
    pub fn new(frames: usize, dim: usize, data: Vec<f32>) -> Self {
        assert_eq!(frames * dim, data.len(), "frame matrix size mismatch");
        Self { frames, dim, data }
    }

    pub fn zeros(frames: usize, dim: usize) -> Self {
        Self::new(frames, dim, vec![0.0; frames * dim])
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.dim.max(1)).take(self.frames)
    }

    /// `len` frames starting at `start`; frames past the end repeat the last
    /// row.
    pub fn crop(&self, start: usize, len: usize) -> FrameMatrix {
        assert!(self.frames > 0, "cannot crop an empty matrix");
        let mut data = Vec::with_capacity(len * self.dim);
        for t in start..start + len {
            data.extend_from_slice(self.row(t.min(self.frames - 1)));
        }
        FrameMatrix::new(len, self.dim, data)
    }

    /// Nearest-frame resampling onto `frames` rows: frame `t` reads source
    /// row `floor(t * src / frames)`. Equal lengths pass through untouched.
    pub fn resample_nearest(&self, frames: usize) -> FrameMatrix {
        if frames == self.frames {
            return self.clone();
        }
        assert!(self.frames > 0, "cannot resample an empty matrix");
        let mut data = Vec::with_capacity(frames * self.dim);
        for t in 0..frames {
            let src = (t * self.frames) / frames;
            data.extend_from_slice(self.row(src.min(self.frames - 1)));
        }
        FrameMatrix::new(frames, self.dim, data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
