//! Adversarial singer classifier and pitch predictor on the reference
//! encoder output.
//!
//! Both heads train to minimize their own loss. Their input passes through a
//! gradient reversal boundary, so the same backward pass pushes the reference
//! encoder to maximize `lambda * L_s + omega * L_f`, i.e. to minimize
//! `L_confusion = -lambda * L_s - omega * L_f`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use svc_autograd::{Graph, ParamStore, Real, Tensor, Var};

use crate::config::ConfusionConfig;
use crate::error::{Result, SvcError};
use crate::features::PitchTrack;
use crate::nn::{Bind, Conv1d, Linear};

/// `L_confusion = -lambda * L_s - omega * L_f`.
pub fn confusion_loss(l_s: f64, l_f: f64, lambda: f64, omega: f64) -> f64 {
    -lambda * l_s - omega * l_f
}

/// Mean and standard deviation of log F0 over voiced training frames; the
/// pitch head predicts z-scores under these statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchStats {
    pub log_f0_mean: f64,
    pub log_f0_std: f64,
}

impl Default for PitchStats {
    fn default() -> Self {
        Self {
            log_f0_mean: 200f64.ln(),
            log_f0_std: 1.0,
        }
    }
}

impl PitchStats {
    /// Statistics over every voiced frame; defaults when nothing is voiced.
    pub fn fit<'a>(tracks: impl IntoIterator<Item = &'a PitchTrack>) -> Self {
        let logs: Vec<f64> = tracks
            .into_iter()
            .flat_map(|t| t.f0_hz().iter().zip(t.voiced()).filter(|(_, &v)| v).map(|(&f, _)| (f as f64).ln()))
            .collect();
        if logs.is_empty() {
            return Self::default();
        }
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        Self {
            log_f0_mean: mean,
            log_f0_std: var.sqrt().max(1e-3),
        }
    }

    /// Per-frame z-scored log F0 and a voiced mask (1 or 0).
    pub fn targets(&self, track: &PitchTrack) -> (Vec<f64>, Vec<f64>) {
        track
            .f0_hz()
            .iter()
            .zip(track.voiced())
            .map(|(&f, &v)| {
                if v {
                    (((f as f64).ln() - self.log_f0_mean) / self.log_f0_std, 1.0)
                } else {
                    (0.0, 0.0)
                }
            })
            .unzip()
    }
}

/// Stack of same-padded convolutions with ReLU followed by a per-frame
/// linear projection.
#[derive(Clone, Debug)]
pub struct ConvHead {
    convs: Vec<Conv1d>,
    out: Linear,
}

impl ConvHead {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, d_in: usize, d_out: usize, cfg: &ConfusionConfig, rng: &mut impl Rng) -> Self {
        let mut convs = Vec::with_capacity(cfg.layers);
        let mut c = d_in;
        for i in 0..cfg.layers {
            convs.push(Conv1d::same(store, &format!("{name}.conv.{i}"), c, cfg.channels, cfg.kernel, 1, rng));
            c = cfg.channels;
        }
        Self {
            convs,
            out: Linear::new(store, &format!("{name}.out"), c, d_out, rng),
        }
    }

    /// `[B, T, d_in]` to `[B, T, d_out]`.
    pub fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, x: Var<'g, F>) -> Var<'g, F> {
        let mut h = x.transpose(1, 2);
        for conv in &self.convs {
            h = conv.forward(g, p, h).relu();
        }
        self.out.forward(g, p, h.transpose(1, 2))
    }
}

#[derive(Clone, Debug)]
pub struct ConfusionHeads {
    pub singer: ConvHead,
    pub pitch: ConvHead,
    pub num_singers: usize,
}

/// Losses from one pass through both heads.
pub struct ConfusionOutput<'g, F> {
    pub l_s: Var<'g, F>,
    pub l_f: Var<'g, F>,
    pub no_voiced_frames: bool,
}

impl ConfusionHeads {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, d_ref: usize, num_singers: usize, cfg: &ConfusionConfig, rng: &mut impl Rng) -> Self {
        Self {
            singer: ConvHead::new(store, &format!("{name}.singer"), d_ref, num_singers, cfg, rng),
            pitch: ConvHead::new(store, &format!("{name}.pitch"), d_ref, 1, cfg, rng),
            num_singers,
        }
    }

    /// Runs both heads on the reference encoder output `[B, T, D_ref]`,
    /// placing a reversal boundary of scale `lambda` (singer path) and
    /// `omega` (pitch path) in front of them.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<'g, F: Real>(
        &self,
        g: &'g Graph<F>,
        p: Bind<'_, F>,
        reference: Var<'g, F>,
        singers: &[usize],
        pitch: &[PitchTrack],
        stats: &PitchStats,
        lambda: f64,
        omega: f64,
    ) -> Result<ConfusionOutput<'g, F>> {
        let logits = self.singer.forward(g, p, reference.grad_reverse(lambda));
        let l_s = singer_ce(logits, singers)?;
        let pred = self.pitch.forward(g, p, reference.grad_reverse(omega));
        let (l_f, no_voiced_frames) = pitch_mse(pred, pitch, stats)?;
        Ok(ConfusionOutput { l_s, l_f, no_voiced_frames })
    }
}

/// Frame-averaged cross entropy of `[B, T, S]` logits against one label per
/// batch item.
pub fn singer_ce<'g, F: Real>(logits: Var<'g, F>, singers: &[usize]) -> Result<Var<'g, F>> {
    let (batch, frames, classes) = (logits.dim(0), logits.dim(1), logits.dim(2));
    if singers.len() != batch {
        return Err(SvcError::InvalidInput(format!(
            "{} singer labels for a batch of {batch}",
            singers.len()
        )));
    }
    if let Some(&bad) = singers.iter().find(|&&s| s >= classes) {
        return Err(SvcError::InvalidInput(format!(
            "singer label {bad} out of range for {classes} singers"
        )));
    }
    let labels: Vec<usize> = singers.iter().flat_map(|&s| std::iter::repeat_n(s, frames)).collect();
    Ok(logits.reshape(&[batch * frames, classes]).cross_entropy(&labels))
}

/// Mean squared error between `[B, T, 1]` predictions and z-scored log F0
/// over voiced frames. Returns zero and `true` when no frame is voiced.
pub fn pitch_mse<'g, F: Real>(pred: Var<'g, F>, pitch: &[PitchTrack], stats: &PitchStats) -> Result<(Var<'g, F>, bool)> {
    let (batch, frames) = (pred.dim(0), pred.dim(1));
    if pitch.len() != batch || pitch.iter().any(|t| t.len() != frames) {
        return Err(SvcError::InvalidInput(format!(
            "pitch targets do not match predictions of shape [{batch}, {frames}]"
        )));
    }
    let (targets, mask): (Vec<f64>, Vec<f64>) = pitch.iter().map(|t| stats.targets(t)).fold(
        (Vec::new(), Vec::new()),
        |(mut ts, mut ms), (t, m)| {
            ts.extend(t);
            ms.extend(m);
            (ts, ms)
        },
    );
    let voiced = mask.iter().filter(|&&m| m > 0.0).count();
    let g = pred.graph();
    let pred = pred.reshape(&[batch * frames]);
    if voiced == 0 {
        return Ok((pred.scale(0.0).sum(), true));
    }
    let diff = pred - g.constant(Tensor::from_f64(&[batch * frames], &targets));
    let masked = diff.square() * g.constant(Tensor::from_f64(&[batch * frames], &mask));
    Ok((masked.sum().scale(1.0 / voiced as f64), false))
}
