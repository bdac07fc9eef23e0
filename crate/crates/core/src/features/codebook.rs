//! Mel-frame k-means codebook and the pseudo-posteriorgram built from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use svc_autograd::Exec;

use super::audio::FrameMatrix;
use super::content::{ContentFeature, ContentKind};
use crate::error::{Result, SvcError};

const MAX_ITERS: usize = 100;
const TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    /// `k` rows of `dim` values.
    pub centers: Vec<Vec<f32>>,
    pub temperature: f64,
}

fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &c)| (x as f64 - c).powi(2)).sum()
}

/// Nearest center and its squared distance; ties go to the lower index.
fn nearest(x: &[f32], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// Stops after 100 iterations or once no center moves by more than `1e-6`.
/// The temperature is set to the mean squared distance from each frame to its
/// nearest center.
pub fn fit_codebook(mels: &[FrameMatrix], k: usize, seed: u64) -> Result<Codebook> {
    if k == 0 {
        return Err(SvcError::InvalidInput("codebook size must be at least 1".into()));
    }
    let dim = mels.first().map(FrameMatrix::dim).unwrap_or(0);
    if let Some(m) = mels.iter().find(|m| m.dim() != dim) {
        return Err(SvcError::InvalidInput(format!(
            "codebook input dimensions differ: {dim} vs {}",
            m.dim()
        )));
    }
    let frames: Vec<&[f32]> = mels.iter().flat_map(|m| m.rows()).collect();
    if frames.len() < 10 * k {
        return Err(SvcError::InvalidInput(format!(
            "codebook of size {k} needs at least {} frames, got {}",
            10 * k,
            frames.len()
        )));
    }
    let exec = Exec::default();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..frames.len());
    centers.push(frames[first].iter().map(|&v| v as f64).collect());
    let mut d2: Vec<f64> = frames.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(SvcError::InvalidInput(format!(
                "only {} distinct frames available for a codebook of size {k}",
                centers.len()
            )));
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = frames.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        while d2[pick] <= 0.0 {
            pick -= 1;
        }
        let c: Vec<f64> = frames[pick].iter().map(|&v| v as f64).collect();
        for (x, d) in frames.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(x, &c));
        }
        centers.push(c);
    }

    for _ in 0..MAX_ITERS {
        let assign = exec.map(&frames, |x| nearest(x, &centers).0);
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &j) in frames.iter().zip(&assign) {
            counts[j] += 1;
            for (s, &v) in sums[j].iter_mut().zip(x.iter()) {
                *s += v as f64;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            // Empty clusters keep their previous center.
            if counts[j] == 0 {
                continue;
            }
            for (c, s) in centers[j].iter_mut().zip(&sums[j]) {
                let new = s / counts[j] as f64;
                shift = shift.max((new - *c).abs());
                *c = new;
            }
        }
        if shift < TOLERANCE {
            break;
        }
    }

    let dists = exec.map(&frames, |x| nearest(x, &centers).1);
    let mean_d2 = dists.iter().sum::<f64>() / frames.len() as f64;
    let temperature = if mean_d2 > 0.0 { mean_d2 } else { 1.0 };
    Ok(Codebook {
        centers: centers
            .into_iter()
            .map(|c| c.into_iter().map(|v| v as f32).collect())
            .collect(),
        temperature,
    })
}

impl Codebook {
    pub fn size(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    /// Smallest squared distance between two distinct centers.
    pub fn min_center_distance_sq(&self) -> f64 {
        let c64: Vec<Vec<f64>> = self
            .centers
            .iter()
            .map(|c| c.iter().map(|&v| v as f64).collect())
            .collect();
        let mut best = f64::INFINITY;
        for i in 0..c64.len() {
            for c in &c64[i + 1..] {
                best = best.min(sq_dist(&self.centers[i], c));
            }
        }
        best
    }

    /// Soft assignment of every frame to the centers:
    /// `softmax_j(-|x - c_j|^2 / temperature)`.
    pub fn pseudo_content(&self, mel: &FrameMatrix) -> Result<ContentFeature> {
        if mel.dim() != self.dim() {
            return Err(SvcError::InvalidInput(format!(
                "mel dimension {} does not match codebook dimension {}",
                mel.dim(),
                self.dim()
            )));
        }
        let c64: Vec<Vec<f64>> = self
            .centers
            .iter()
            .map(|c| c.iter().map(|&v| v as f64).collect())
            .collect();
        let k = self.size();
        let mut data = Vec::with_capacity(mel.frames() * k);
        for x in mel.rows() {
            let logits: Vec<f64> = c64.iter().map(|c| -sq_dist(x, c) / self.temperature).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|e| (e / z) as f32));
        }
        ContentFeature::new(ContentKind::PseudoPpg, FrameMatrix::new(mel.frames(), k, data))
    }
}
