use rand::Rng;
use svc_autograd::{Conv1dSpec, Graph, ParamStore, Real, Tensor, Var};

use crate::config::DecoderConfig;
use crate::features::{PitchTrack, HOP, SAMPLE_RATE};
use crate::nn::{Bind, Conv1d, ConvTranspose1d, Linear};

const LRELU_SLOPE: f64 = 0.1;

/// Sine excitation for a pitch track: channel `h` carries
/// `amplitude * sin((h + 1) * phase)` on voiced samples, where `phase`
/// accumulates the F0 of the nearest frame. Harmonics above Nyquist are
/// silent. Returns `[harmonics, 240 * T]` in row-major order.
pub fn harmonic_source(pitch: &PitchTrack, harmonics: usize, amplitude: f64) -> Vec<f64> {
    let frames = pitch.len();
    let n = frames * HOP;
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let mut out = vec![0.0; harmonics * n];
    let mut phase = 0.0f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    for i in 0..n {
        let t = ((i + HOP / 2) / HOP).min(frames - 1);
        if !pitch.voiced()[t] {
            continue;
        }
        let f0 = pitch.f0_hz()[t] as f64;
        phase = (phase + two_pi * f0 / SAMPLE_RATE as f64) % two_pi;
        for h in 0..harmonics {
            if (h + 1) as f64 * f0 < nyquist {
                out[h * n + i] = amplitude * ((h + 1) as f64 * phase).sin();
            }
        }
    }
    out
}

/// Frame-level pitch conditioning: `[ln F0 or 0, voiced]` per frame.
pub fn pitch_features(pitch: &PitchTrack) -> Vec<f64> {
    pitch
        .f0_hz()
        .iter()
        .zip(pitch.voiced())
        .flat_map(|(&f, &v)| if v { [(f as f64).ln(), 1.0] } else { [0.0, 0.0] })
        .collect()
}

#[derive(Clone, Debug)]
struct ResBlock {
    dilated: Vec<Conv1d>,
    plain: Vec<Conv1d>,
}

impl ResBlock {
    fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, mut x: Var<'g, F>) -> Var<'g, F> {
        for (c1, c2) in self.dilated.iter().zip(&self.plain) {
            let y = c1.forward(g, p, x.leaky_relu(LRELU_SLOPE));
            let y = c2.forward(g, p, y.leaky_relu(LRELU_SLOPE));
            x = x + y;
        }
        x
    }
}

#[derive(Clone, Debug)]
struct Level {
    up: ConvTranspose1d,
    source: Conv1d,
    blocks: Vec<ResBlock>,
}

/// Upsampling waveform generator: frame-level conditioning to `240 * T`
/// samples in `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct Decoder {
    pitch_proj: Linear,
    pre: Conv1d,
    levels: Vec<Level>,
    post: Conv1d,
    pub cond_dim: usize,
    harmonics: usize,
    amplitude: f64,
}

impl Decoder {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, cond_dim: usize, cfg: &DecoderConfig, rng: &mut impl Rng) -> Self {
        let pitch_proj = Linear::new(store, &format!("{name}.pitch_proj"), 2, cond_dim, rng);
        let c0 = cfg.initial_channels;
        let pre = Conv1d::same(store, &format!("{name}.pre"), cond_dim, c0, 7, 1, rng);
        let mut levels = Vec::new();
        let mut cin = c0;
        let mut hop_left = HOP;
        for (i, &u) in cfg.upsample_rates.iter().enumerate() {
            let cout = cin / 2;
            let pad = u.div_ceil(2);
            let up = ConvTranspose1d::new(store, &format!("{name}.up.{i}"), cin, cout, u + 2 * pad, u, pad, rng);
            hop_left /= u;
            let s = hop_left;
            let source = Conv1d::new(
                store,
                &format!("{name}.source.{i}"),
                cfg.harmonics,
                cout,
                s + 2 * (s / 2),
                Conv1dSpec::strided(s, s / 2),
                rng,
            );
            let blocks = cfg
                .resblock_kernels
                .iter()
                .zip(&cfg.resblock_dilations)
                .enumerate()
                .map(|(j, (&k, dils))| ResBlock {
                    dilated: dils
                        .iter()
                        .enumerate()
                        .map(|(m, &d)| Conv1d::same(store, &format!("{name}.up.{i}.res.{j}.d{m}"), cout, cout, k, d, rng))
                        .collect(),
                    plain: dils
                        .iter()
                        .enumerate()
                        .map(|(m, _)| Conv1d::same(store, &format!("{name}.up.{i}.res.{j}.p{m}"), cout, cout, k, 1, rng))
                        .collect(),
                })
                .collect();
            levels.push(Level { up, source, blocks });
            cin = cout;
        }
        let post = Conv1d::same(store, &format!("{name}.post"), cin, 1, 7, 1, rng);
        Self {
            pitch_proj,
            pre,
            levels,
            post,
            cond_dim,
            harmonics: cfg.harmonics,
            amplitude: cfg.source_amplitude,
        }
    }

    /// `cond` is `[B, T, cond_dim]`; returns `[B, 240 * T]`.
    pub fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, cond: Var<'g, F>, pitch: &[PitchTrack]) -> Var<'g, F> {
        let (batch, frames) = (cond.dim(0), cond.dim(1));
        assert_eq!(pitch.len(), batch, "one pitch track per batch item");
        assert!(pitch.iter().all(|t| t.len() == frames), "pitch and encoder lengths differ");
        let pf: Vec<f64> = pitch.iter().flat_map(pitch_features).collect();
        let pf = g.constant(Tensor::from_f64(&[batch, frames, 2], &pf));
        let cond = cond + self.pitch_proj.forward(g, p, pf);
        let src: Vec<f64> = pitch
            .iter()
            .flat_map(|t| harmonic_source(t, self.harmonics, self.amplitude))
            .collect();
        let src = g.constant(Tensor::from_f64(&[batch, self.harmonics, frames * HOP], &src));

        let mut x = self.pre.forward(g, p, cond.transpose(1, 2));
        for level in &self.levels {
            x = level.up.forward(g, p, x.leaky_relu(LRELU_SLOPE));
            x = x + level.source.forward(g, p, src);
            let outs: Vec<_> = level.blocks.iter().map(|b| b.forward(g, p, x)).collect();
            x = outs[1..].iter().fold(outs[0], |acc, &o| acc + o);
            if outs.len() > 1 {
                x = x.scale(1.0 / outs.len() as f64);
            }
        }
        let y = self.post.forward(g, p, x.leaky_relu(0.01)).tanh();
        y.reshape(&[batch, frames * HOP])
    }
}
