//! Log-mel analysis shared by feature extraction and the training loss.
//!
//! Frame `t` is the 1024-point FFT of the signal around sample `t * 240`,
//! weighted by a 960-sample periodic Hann window centred in the FFT frame.
//! The signal is zero-padded by 512 samples on both sides. Power is projected
//! onto 80 Slaney-normalized mel filters spanning 0 to 12 kHz, floored at
//! `1e-5` and passed through the natural log.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftNum, FftPlanner};
use svc_autograd::{Exec, Graph, Real, Tensor, Var};

use super::audio::{frame_count, AudioClip, FrameMatrix, HOP, SAMPLE_RATE, WINDOW};

pub const N_FFT: usize = 1024;
pub const N_BINS: usize = N_FFT / 2 + 1;
pub const N_MELS: usize = 80;
pub const POWER_FLOOR: f64 = 1e-5;
pub const F_MAX: f64 = 12_000.0;

const PAD: usize = N_FFT / 2;
const WINDOW_OFFSET: usize = (N_FFT - WINDOW) / 2;

/// Hz to mel on the Slaney scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if hz >= min_log_hz {
        min_log_mel + (hz / min_log_hz).ln() / logstep
    } else {
        hz / f_sp
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if mel >= min_log_mel {
        min_log_hz * (logstep * (mel - min_log_mel)).exp()
    } else {
        mel * f_sp
    }
}

/// Filter edge frequencies: `N_MELS + 2` points evenly spaced in mel.
/// Filter `m` peaks at `edges[m + 1]`.
pub fn mel_edges_hz() -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(F_MAX));
    (0..N_MELS + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (N_MELS + 1) as f64))
        .collect()
}

/// Centre frequency of each mel filter.
pub fn mel_centers_hz() -> Vec<f64> {
    mel_edges_hz()[1..=N_MELS].to_vec()
}

/// Triangular filterbank, `[N_BINS, N_MELS]`, each filter scaled to unit area
/// in Hz.
pub fn mel_filterbank() -> Vec<f64> {
    let edges = mel_edges_hz();
    let mut fb = vec![0.0; N_BINS * N_MELS];
    for k in 0..N_BINS {
        let f = k as f64 * SAMPLE_RATE as f64 / N_FFT as f64;
        for m in 0..N_MELS {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            let w = ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0);
            fb[k * N_MELS + m] = w * 2.0 / (r - l);
        }
    }
    fb
}

/// Periodic Hann window of length [`WINDOW`].
pub fn hann_window() -> Vec<f64> {
    (0..WINDOW)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / WINDOW as f64).cos())
        .collect()
}

/// Precomputed window, filterbank and FFT plan.
pub struct MelAnalyzer<F: Real + FftNum> {
    fft: Arc<dyn Fft<F>>,
    window: Vec<F>,
    filterbank: Tensor<F>,
}

impl<F: Real + FftNum> Default for MelAnalyzer<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real + FftNum> MelAnalyzer<F> {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(N_FFT);
        let window = hann_window().into_iter().map(F::c).collect();
        let fb: Vec<F> = mel_filterbank().into_iter().map(F::c).collect();
        Self {
            fft,
            window,
            filterbank: Tensor::new(&[N_BINS, N_MELS], fb),
        }
    }

    pub fn filterbank(&self) -> &Tensor<F> {
        &self.filterbank
    }

    /// Complex spectrum of frame `t` of `wave`.
    fn frame_spectrum(&self, wave: &[F], t: usize, scratch: &mut Vec<Complex<F>>) -> Vec<Complex<F>> {
        let mut buf = vec![Complex::new(F::zero(), F::zero()); N_FFT];
        // Padded index p maps to wave index p - PAD.
        let start = t * HOP + WINDOW_OFFSET;
        for (n, (slot, &w)) in buf[WINDOW_OFFSET..WINDOW_OFFSET + WINDOW]
            .iter_mut()
            .zip(&self.window)
            .enumerate()
        {
            let p = start + n;
            if p >= PAD && p - PAD < wave.len() {
                slot.re = wave[p - PAD] * w;
            }
        }
        scratch.resize(self.fft.get_inplace_scratch_len(), Complex::new(F::zero(), F::zero()));
        self.fft.process_with_scratch(&mut buf, scratch);
        buf.truncate(N_BINS);
        buf
    }

    /// Gradient of the frame's power spectrum loss with respect to the
    /// wave, scatter-added into `out`.
    fn frame_backward(&self, spec: &[Complex<F>], grad: &[F], t: usize, out: &mut [F], scratch: &mut Vec<Complex<F>>) {
        // d/du_n sum_k g_k |X_k|^2 = 2 Re(sum_k g_k conj(X_k) e^{-2 pi i k n / N})
        let mut buf = vec![Complex::new(F::zero(), F::zero()); N_FFT];
        for k in 0..N_BINS {
            buf[k] = spec[k].conj() * grad[k];
        }
        scratch.resize(self.fft.get_inplace_scratch_len(), Complex::new(F::zero(), F::zero()));
        self.fft.process_with_scratch(&mut buf, scratch);
        let two = F::c(2.0);
        let start = t * HOP + WINDOW_OFFSET;
        for (n, &w) in self.window.iter().enumerate() {
            let p = start + n;
            if p >= PAD && p - PAD < out.len() {
                out[p - PAD] += two * buf[WINDOW_OFFSET + n].re * w;
            }
        }
    }

    /// Power spectrogram of a batch of equal-length waves `[B, N]` as
    /// `[B, T, N_BINS]`, differentiable with respect to the waves.
    pub fn power_spectrogram<'g>(self: &Arc<Self>, wave: Var<'g, F>) -> Var<'g, F> {
        let x = wave.value();
        assert_eq!(x.rank(), 2, "power_spectrogram expects [batch, samples]");
        let (batch, len) = (x.dim(0), x.dim(1));
        let frames = frame_count(len);
        let xd = x.data();
        let specs: Vec<Vec<Complex<F>>> = Exec::default().map_range(batch * frames, |i| {
            let (b, t) = (i / frames, i % frames);
            let mut scratch = Vec::new();
            self.frame_spectrum(&xd[b * len..(b + 1) * len], t, &mut scratch)
        });
        let mut power = Vec::with_capacity(batch * frames * N_BINS);
        for s in &specs {
            power.extend(s.iter().map(|c| c.re * c.re + c.im * c.im));
        }
        let out = Tensor::new(&[batch, frames, N_BINS], power);
        let this = Arc::clone(self);
        wave.graph().custom(&[wave], out, move |ctx| {
            let g = ctx.grad.data();
            let mut gx = vec![F::zero(); batch * len];
            Exec::default().for_each_chunk(&mut gx, len, |b, chunk| {
                let mut scratch = Vec::new();
                for t in 0..frames {
                    let i = b * frames + t;
                    this.frame_backward(&specs[i], &g[i * N_BINS..(i + 1) * N_BINS], t, chunk, &mut scratch);
                }
            });
            vec![Some(Tensor::new(&[batch, len], gx))]
        })
    }

    /// Log-mel spectrogram `[B, T, N_MELS]` of waves `[B, N]`.
    pub fn log_mel<'g>(self: &Arc<Self>, wave: Var<'g, F>) -> Var<'g, F> {
        let power = self.power_spectrogram(wave);
        let fb = wave.graph().constant(self.filterbank.clone());
        power.linear(fb, None).clamp_min(POWER_FLOOR).ln()
    }
}

/// Log-mel spectrogram of one clip as a `T x 80` matrix.
pub fn extract_mel(clip: &AudioClip) -> FrameMatrix {
    let analyzer = Arc::new(MelAnalyzer::<f32>::new());
    extract_mel_with(&analyzer, clip)
}

/// [`extract_mel`] reusing an existing analyzer. Runs the same arithmetic as
/// [`MelAnalyzer::log_mel`], so training targets and features agree exactly.
pub fn extract_mel_with(analyzer: &Arc<MelAnalyzer<f32>>, clip: &AudioClip) -> FrameMatrix {
    let g = Graph::inference();
    let wave = g.constant(Tensor::new(&[1, clip.len()], clip.samples().to_vec()));
    let mel = analyzer.log_mel(wave).value();
    FrameMatrix::new(mel.dim(1), N_MELS, mel.data().to_vec())
}
