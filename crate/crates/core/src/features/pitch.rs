//! Frame-level F0 by normalized autocorrelation.

use serde::{Deserialize, Serialize};
use svc_autograd::Exec;

use super::audio::{AudioClip, FrameMatrix, HOP, SAMPLE_RATE, WINDOW};
use crate::error::{Result, SvcError};

pub const F0_MIN: f64 = 50.0;
pub const F0_MAX: f64 = 1000.0;

/// Tracker thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PitchConfig {
    /// Minimum normalized autocorrelation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Minimum frame RMS for a voiced frame.
    pub rms_gate: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            voicing_threshold: 0.3,
            rms_gate: 1e-4,
        }
    }
}

/// Per-frame F0 in Hz with voicing flags. Unvoiced frames carry `f0 == 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PitchTrack {
    f0_hz: Vec<f32>,
    voiced: Vec<bool>,
}

impl PitchTrack {
    pub fn new(f0_hz: Vec<f32>, voiced: Vec<bool>) -> Result<Self> {
        if f0_hz.len() != voiced.len() {
            return Err(SvcError::InvalidInput(format!(
                "pitch track has {} F0 values but {} voicing flags",
                f0_hz.len(),
                voiced.len()
            )));
        }
        for (t, (&f, &v)) in f0_hz.iter().zip(&voiced).enumerate() {
            let ok = if v {
                (F0_MIN as f32..=F0_MAX as f32).contains(&f)
            } else {
                f == 0.0
            };
            if !ok {
                return Err(SvcError::InvalidInput(format!(
                    "frame {t}: F0 {f} Hz inconsistent with voiced = {v}"
                )));
            }
        }
        Ok(Self { f0_hz, voiced })
    }

    /// Builds a track from raw Hz values; non-positive values are unvoiced and
    /// voiced values are clamped into the tracker range.
    pub fn from_hz(f0: &[f32]) -> Self {
        let voiced: Vec<bool> = f0.iter().map(|&f| f > 0.0 && f.is_finite()).collect();
        let f0_hz = f0
            .iter()
            .zip(&voiced)
            .map(|(&f, &v)| if v { f.clamp(F0_MIN as f32, F0_MAX as f32) } else { 0.0 })
            .collect();
        Self { f0_hz, voiced }
    }

    pub fn f0_hz(&self) -> &[f32] {
        &self.f0_hz
    }

    pub fn voiced(&self) -> &[bool] {
        &self.voiced
    }

    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|&&v| v).count()
    }

    /// Frames `start..start + len`, repeating the last frame past the end.
    pub fn crop(&self, start: usize, len: usize) -> PitchTrack {
        let last = self.len() - 1;
        let idx = (start..start + len).map(|t| t.min(last));
        let (f0_hz, voiced) = idx.map(|t| (self.f0_hz[t], self.voiced[t])).unzip();
        PitchTrack { f0_hz, voiced }
    }

    pub fn resample_nearest(&self, frames: usize) -> PitchTrack {
        if frames == self.len() {
            return self.clone();
        }
        let n = self.len();
        let (f0_hz, voiced) = (0..frames)
            .map(|t| {
                let s = ((t * n) / frames).min(n - 1);
                (self.f0_hz[s], self.voiced[s])
            })
            .unzip();
        PitchTrack { f0_hz, voiced }
    }

    /// Multiplies every voiced F0 by `factor`, clamped to the tracker range.
    pub fn transpose(&self, factor: f32) -> PitchTrack {
        let f0_hz = self
            .f0_hz
            .iter()
            .zip(&self.voiced)
            .map(|(&f, &v)| if v { (f * factor).clamp(F0_MIN as f32, F0_MAX as f32) } else { 0.0 })
            .collect();
        PitchTrack {
            f0_hz,
            voiced: self.voiced.clone(),
        }
    }

    /// Two columns per frame: F0 in Hz and the voicing flag.
    pub fn to_matrix(&self) -> FrameMatrix {
        let data = self
            .f0_hz
            .iter()
            .zip(&self.voiced)
            .flat_map(|(&f, &v)| [f, if v { 1.0 } else { 0.0 }])
            .collect();
        FrameMatrix::new(self.len(), 2, data)
    }

    pub fn from_matrix(m: &FrameMatrix) -> Result<Self> {
        if m.dim() != 2 {
            return Err(SvcError::InvalidInput(format!(
                "pitch matrix needs 2 columns, found {}",
                m.dim()
            )));
        }
        let (f0, voiced) = m.rows().map(|r| (r[0], r[1] > 0.5)).unzip();
        Self::new(f0, voiced)
    }
}

/// Lag range searched, in samples.
fn lag_range() -> (usize, usize) {
    let sr = SAMPLE_RATE as f64;
    ((sr / F0_MAX).round() as usize, (sr / F0_MIN).round() as usize)
}

/// Normalized autocorrelation of `x` at lag `tau`, over the overlapping part.
fn nacf(x: &[f64], tau: usize) -> f64 {
    let n = x.len() - tau;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b) = (x[i], x[i + tau]);
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    let denom = (xx * yy).sqrt();
    if denom > 0.0 {
        xy / denom
    } else {
        0.0
    }
}

/// F0 of one analysis window, or `None` when unvoiced.
fn analyze_frame(x: &[f64], config: &PitchConfig) -> Option<f64> {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if rms < config.rms_gate {
        return None;
    }
    let (lo, hi) = lag_range();
    // r[i] holds the correlation at lag lo - 1 + i so boundary lags can be
    // tested as local maxima.
    let r: Vec<f64> = (lo - 1..=hi + 1).map(|tau| nacf(x, tau)).collect();
    let at = |tau: usize| r[tau + 1 - lo];
    let r_max = (lo..=hi).map(at).fold(f64::NEG_INFINITY, f64::max);
    if r_max < config.voicing_threshold {
        return None;
    }
    let tau = (lo..=hi).find(|&tau| {
        let v = at(tau);
        v >= 0.9 * r_max && v >= at(tau - 1) && v >= at(tau + 1)
    })?;
    let (a, b, c) = (at(tau - 1), at(tau), at(tau + 1));
    let curvature = a - 2.0 * b + c;
    let shift = if curvature < 0.0 {
        (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let f0 = SAMPLE_RATE as f64 / (tau as f64 + shift);
    Some(f0.clamp(F0_MIN, F0_MAX))
}

/// Window of [`WINDOW`] samples centred on frame `t`, zero outside the clip.
fn frame_window(samples: &[f32], t: usize) -> Vec<f64> {
    let center = (t * HOP) as isize;
    let start = center - (WINDOW / 2) as isize;
    (0..WINDOW as isize)
        .map(|i| {
            let p = start + i;
            if p >= 0 && (p as usize) < samples.len() {
                samples[p as usize] as f64
            } else {
                0.0
            }
        })
        .collect()
}

pub fn extract_f0(clip: &AudioClip) -> PitchTrack {
    extract_f0_with(clip, &PitchConfig::default(), Exec::default())
}

pub fn extract_f0_with(clip: &AudioClip, config: &PitchConfig, exec: Exec) -> PitchTrack {
    let samples = clip.samples();
    let estimates = exec.map_range(clip.frames(), |t| analyze_frame(&frame_window(samples, t), config));
    let f0_hz = estimates.iter().map(|e| e.unwrap_or(0.0) as f32).collect();
    let voiced = estimates.iter().map(Option::is_some).collect();
    PitchTrack { f0_hz, voiced }
}
