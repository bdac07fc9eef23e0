//! Objective conversion metrics: pitch correlation between source and output,
//! and timbre similarity between output and the target singer's real voice.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use svc_autograd::{Adam, AdamConfig, Exec, Graph, ParamStore, Tensor, Var};

use crate::config::EvalConfig;
use crate::dataset::LabeledClip;
use crate::error::{Result, SvcError};
use crate::features::{extract_f0_with, extract_mel, FrameMatrix, PitchTrack, N_MELS};
use crate::inference::Synthesizer;
use crate::nn::{Bind, Linear};
use crate::rng::{purpose, rng_for};

pub const FLAG_NCC_DEGENERATE: &str = "ncc_degenerate";
pub const FLAG_FAILED: &str = "conversion_failed";

/// Zero-lag normalized cross-correlation `sum a b / sqrt(sum a^2 * sum b^2)`.
/// `None` when the lengths differ, the input is empty or either side has
/// zero energy.
pub fn ncc_values(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return None;
    }
    Some((ab / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

/// Pitch correlation over frames voiced in both tracks. The shorter track is
/// stretched to the longer one by nearest-frame repetition. With `log_f0`
/// the natural log of F0 is compared instead of Hz. `None` marks a
/// degenerate pair with no commonly voiced frame.
pub fn ncc(a: &PitchTrack, b: &PitchTrack, log_f0: bool) -> Option<f64> {
    let n = a.len().max(b.len());
    if n == 0 {
        return None;
    }
    let (a, b) = (a.resample_nearest(n), b.resample_nearest(n));
    let value = |f: f32| if log_f0 { (f as f64).ln() } else { f as f64 };
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n)
        .filter(|&t| a.voiced()[t] && b.voiced()[t])
        .map(|t| (value(a.f0_hz()[t]), value(b.f0_hz()[t])))
        .unzip();
    ncc_values(&xs, &ys)
}

/// Cosine similarity; rejects mismatched dimensions and zero vectors.
pub fn cos_sim(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(SvcError::InvalidInput(format!(
            "cosine similarity needs equal non-zero dimensions, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        return Err(SvcError::InvalidInput("cosine similarity of a zero vector".into()));
    }
    Ok((xy / (xx.sqrt() * yy.sqrt())).clamp(-1.0, 1.0))
}

/// Small mel-input singer classifier whose time-averaged penultimate layer,
/// L2-normalized, serves as a voice embedding.
#[derive(Clone, Debug)]
pub struct SpeakerEmbedder {
    pub singers: Vec<String>,
    mean: Vec<f32>,
    inv_std: Vec<f32>,
    params: ParamStore<f32>,
    hidden: Linear,
    embed: Linear,
    classify: Linear,
}

impl SpeakerEmbedder {
    /// Trains on `(singer index, mel)` pairs with full-batch Adam.
    pub fn train(examples: &[(usize, &FrameMatrix)], singers: Vec<String>, cfg: &EvalConfig, seed: u64) -> Result<Self> {
        if examples.is_empty() {
            return Err(SvcError::InvalidInput("speaker embedder needs at least one clip".into()));
        }
        if let Some((s, _)) = examples.iter().find(|(s, _)| *s >= singers.len()) {
            return Err(SvcError::InvalidInput(format!("singer index {s} out of range for {} singers", singers.len())));
        }
        if let Some((_, m)) = examples.iter().find(|(_, m)| m.dim() != N_MELS || m.frames() == 0) {
            return Err(SvcError::InvalidInput(format!(
                "embedder input must be non-empty {N_MELS}-band mel, got {} x {}",
                m.frames(),
                m.dim()
            )));
        }
        let (mean, inv_std) = standardizer(examples.iter().map(|(_, m)| *m));
        let mut rng = rng_for(&[seed, purpose::EMBEDDER]);
        let mut params = ParamStore::new();
        let hidden = Linear::new(&mut params, "embedder.hidden", N_MELS, cfg.embedder_hidden, &mut rng);
        let embed = Linear::new(&mut params, "embedder.embed", cfg.embedder_hidden, cfg.embedder_dim, &mut rng);
        let classify = Linear::new(&mut params, "embedder.classify", cfg.embedder_dim, singers.len(), &mut rng);
        let mut model = Self {
            singers,
            mean,
            inv_std,
            params,
            hidden,
            embed,
            classify,
        };
        let labels: Vec<usize> = examples.iter().map(|(s, _)| *s).collect();
        let inputs: Vec<Tensor<f32>> = examples.iter().map(|(_, m)| model.standardize(m)).collect();
        let mut opt = Adam::new(&model.params, AdamConfig::default());
        for _ in 0..cfg.embedder_steps {
            let g = Graph::<f32>::new();
            let p = Bind::trainable(&model.params);
            let pooled: Vec<Var<f32>> = inputs.iter().map(|x| model.pooled(&g, p, g.constant(x.clone()))).collect();
            let logits = model.classify.forward(&g, p, g.concat(&pooled, 0));
            let loss = logits.cross_entropy(&labels);
            if !loss.item().is_finite() {
                return Err(SvcError::NonFiniteLoss {
                    component: "speaker embedder",
                    step: 0,
                });
            }
            let grads = g.backward(loss).for_store(&model.params);
            opt.step(&mut model.params, &grads, cfg.embedder_learning_rate);
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.params.get(self.embed.w).dim(1)
    }

    fn standardize(&self, mel: &FrameMatrix) -> Tensor<f32> {
        let data = mel
            .rows()
            .flat_map(|row| row.iter().zip(&self.mean).zip(&self.inv_std).map(|((&v, &m), &s)| (v - m) * s))
            .collect();
        Tensor::new(&[mel.frames(), N_MELS], data)
    }

    /// `[1, dim]` time average of the penultimate layer.
    fn pooled<'g>(&self, g: &'g Graph<f32>, p: Bind<'_, f32>, x: Var<'g, f32>) -> Var<'g, f32> {
        let h = self.hidden.forward(g, p, x).relu();
        let e = self.embed.forward(g, p, h).tanh();
        let dim = e.dim(1);
        e.mean_axis(0, false).reshape(&[1, dim])
    }

    /// Unit-norm embedding of a mel spectrogram.
    pub fn embed(&self, mel: &FrameMatrix) -> Result<Vec<f64>> {
        if mel.dim() != N_MELS || mel.frames() == 0 {
            return Err(SvcError::InvalidInput(format!(
                "embedder input must be non-empty {N_MELS}-band mel, got {} x {}",
                mel.frames(),
                mel.dim()
            )));
        }
        let g = Graph::<f32>::inference();
        let v = self.pooled(&g, Bind::frozen(&self.params), g.constant(self.standardize(mel)));
        let v: Vec<f64> = v.value().data().iter().map(|&x| x as f64).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(SvcError::InvalidInput("embedding has zero or non-finite norm".into()));
        }
        Ok(v.into_iter().map(|x| x / norm).collect())
    }

    /// Mean embedding per singer over the given clips' mels.
    pub fn centroids<'a>(&self, mels: impl IntoIterator<Item = (&'a str, &'a FrameMatrix)>) -> Result<BTreeMap<String, Vec<f64>>> {
        let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
        for (singer, mel) in mels {
            let e = self.embed(mel)?;
            let entry = sums.entry(singer.to_string()).or_insert_with(|| (vec![0.0; e.len()], 0));
            for (a, v) in entry.0.iter_mut().zip(&e) {
                *a += v;
            }
            entry.1 += 1;
        }
        Ok(sums
            .into_iter()
            .map(|(s, (sum, n))| (s, sum.into_iter().map(|v| v / n as f64).collect()))
            .collect())
    }
}

/// Per-band mean and reciprocal standard deviation over all frames.
fn standardizer<'a>(mels: impl Iterator<Item = &'a FrameMatrix>) -> (Vec<f32>, Vec<f32>) {
    let mut sum = vec![0.0f64; N_MELS];
    let mut sq = vec![0.0f64; N_MELS];
    let mut n = 0usize;
    for m in mels {
        for row in m.rows() {
            for (j, &v) in row.iter().enumerate() {
                sum[j] += v as f64;
                sq[j] += (v as f64) * (v as f64);
            }
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let inv_std = sq
        .iter()
        .zip(&mean)
        .map(|(s, m)| (1.0 / (s / n - m * m).max(1e-6).sqrt()) as f32)
        .collect();
    (mean.into_iter().map(|m| m as f32).collect(), inv_std)
}

/// Metrics of one (source clip, target singer) conversion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub source: String,
    pub source_singer: String,
    pub target_singer: String,
    pub ncc: Option<f64>,
    pub cos_sim: Option<f64>,
    /// Singer whose centroid is most similar to the converted clip.
    pub closest_singer: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean metrics over all non-degenerate pairs plus the per-pair breakdown.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ncc: Option<f64>,
    pub cos_sim: Option<f64>,
    pub pairs: Vec<PairMetrics>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricReport {
    pub fn from_pairs(pairs: Vec<PairMetrics>) -> Self {
        Self {
            ncc: mean(pairs.iter().filter_map(|p| p.ncc)),
            cos_sim: mean(pairs.iter().filter_map(|p| p.cos_sim)),
            pairs,
        }
    }

    /// Aligned text table: one row per pair and a closing mean row.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut rows = vec![[
            "source".to_string(),
            "from".to_string(),
            "to".to_string(),
            "NCC".to_string(),
            "COS-SIM".to_string(),
        ]];
        for p in &self.pairs {
            rows.push([
                p.source.clone(),
                p.source_singer.clone(),
                p.target_singer.clone(),
                fmt(p.ncc),
                fmt(p.cos_sim),
            ]);
        }
        rows.push([
            format!("mean ({} pairs)", self.pairs.len()),
            String::new(),
            String::new(),
            fmt(self.ncc),
            fmt(self.cos_sim),
        ]);
        let widths: Vec<usize> = (0..5).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            if i + 1 == rows.len() {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 8));
            }
            let line = format!(
                "{:<w0$}  {:<w1$}  {:<w2$}  {:>w3$}  {:>w4$}",
                r[0],
                r[1],
                r[2],
                r[3],
                r[4],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3],
                w4 = widths[4]
            );
            let _ = writeln!(out, "{}", line.trim_end());
        }
        out
    }
}

/// Converts every clip to every singer that both the model knows and the
/// clip set provides real audio for, then scores pitch correlation against
/// the source and timbre similarity against the target's centroid.
/// Failed conversions are kept as flagged pairs.
pub fn evaluate_conversion(synth: &Synthesizer, clips: &[LabeledClip], embedder: &SpeakerEmbedder) -> Result<MetricReport> {
    if clips.is_empty() {
        return Ok(MetricReport::default());
    }
    let exec = Exec::default();
    let mels: Vec<FrameMatrix> = exec.map(clips, |c| extract_mel(&c.clip));
    let centroids = embedder.centroids(clips.iter().zip(&mels).map(|(c, m)| (c.singer.as_str(), m)))?;
    let targets: Vec<(usize, &String)> = synth
        .meta
        .singers
        .iter()
        .enumerate()
        .filter(|(_, s)| centroids.contains_key(*s))
        .collect();
    let inputs = exec.map(clips, |c| synth.prepare(&c.clip));
    let jobs: Vec<(usize, usize, &String)> = (0..clips.len())
        .flat_map(|i| targets.iter().map(move |&(t, name)| (i, t, name)))
        .collect();
    let log_f0 = synth.config.eval.ncc_log_f0;
    let pairs = exec.map(&jobs, |&(i, target, name)| {
        let clip = &clips[i];
        let mut pair = PairMetrics {
            source: clip.id.clone(),
            source_singer: clip.singer.clone(),
            target_singer: name.clone(),
            ncc: None,
            cos_sim: None,
            closest_singer: None,
            flags: Vec::new(),
            error: None,
        };
        let scored = inputs[i].as_ref().map_err(|e| e.to_string()).and_then(|input| {
            let out = synth.render(input, target).map_err(|e| e.to_string())?;
            let pitch = extract_f0_with(&out, &synth.config.features.pitch, Exec::Sequential);
            let emb = embedder.embed(&extract_mel(&out)).map_err(|e| e.to_string())?;
            let sims: Vec<(&String, f64)> = centroids
                .iter()
                .map(|(s, c)| cos_sim(&emb, c).map(|v| (s, v)).map_err(|e| e.to_string()))
                .collect::<std::result::Result<_, _>>()?;
            Ok((ncc(&input.pitch, &pitch, log_f0), sims))
        });
        match scored {
            Ok((n, sims)) => {
                pair.ncc = n;
                if n.is_none() {
                    pair.flags.push(FLAG_NCC_DEGENERATE.into());
                }
                pair.cos_sim = sims.iter().find(|(s, _)| *s == name).map(|(_, v)| *v);
                pair.closest_singer = sims
                    .iter()
                    .fold(None::<(&String, f64)>, |best, &(s, v)| match best {
                        Some((_, b)) if b >= v => best,
                        _ => Some((s, v)),
                    })
                    .map(|(s, _)| s.clone());
            }
            Err(e) => {
                pair.flags.push(FLAG_FAILED.into());
                pair.error = Some(e);
            }
        }
        pair
    });
    Ok(MetricReport::from_pairs(pairs))
}
