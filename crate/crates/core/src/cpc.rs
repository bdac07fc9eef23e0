//! Contrastive predictive coding on the encoder output.
//!
//! A causal context network summarizes `e_1..e_t` into `c_t`; for each step
//! `k` a projection `W_k` scores candidates `e` by `e^T W_k c_t`. The loss is
//! the InfoNCE cross entropy of the true future frame `e_{t+k}` against
//! negatives drawn from the same utterance, summed over `t` and `k` and
//! scaled by `beta`.

use rand::seq::index;
use rand::Rng;
use svc_autograd::{Conv1dSpec, Graph, ParamId, ParamStore, Real, Var};

use crate::config::CpcConfig;
use crate::nn::{Bind, Conv1d, Lstm};
use crate::rng::{purpose, rng_for};

/// Candidate rows for every `(k, t)`: entry `[k - 1][t]` lists the positive
/// index `t + k` first, then the negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeSet {
    pub frames: usize,
    pub sets: Vec<Vec<Vec<usize>>>,
}

impl NegativeSet {
    /// Members per candidate set, `min(n_neg, T - 1) + 1`.
    pub fn set_size(&self) -> usize {
        self.sets
            .iter()
            .flat_map(|per_t| per_t.first())
            .map(Vec::len)
            .next()
            .unwrap_or(0)
    }

    /// Number of `(t, k)` terms.
    pub fn terms(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}

/// Draws negatives for an utterance of `frames` frames. For each `(t, k)`
/// with `t + k < frames`, up to `n_neg` indices are drawn uniformly without
/// replacement from `0..frames` minus `t + k`, seeded by `(seed, t, k)`.
pub fn sample_negatives(frames: usize, k_max: usize, n_neg: usize, seed: u64) -> NegativeSet {
    let take = n_neg.min(frames.saturating_sub(1));
    let sets = (1..=k_max)
        .map(|k| {
            (0..frames.saturating_sub(k))
                .map(|t| {
                    let pos = t + k;
                    let mut rng = rng_for(&[seed, purpose::NEGATIVES, t as u64, k as u64]);
                    let mut set = Vec::with_capacity(take + 1);
                    set.push(pos);
                    set.extend(
                        index::sample(&mut rng, frames - 1, take)
                            .into_iter()
                            .map(|i| if i >= pos { i + 1 } else { i }),
                    );
                    set
                })
                .collect()
        })
        .collect();
    NegativeSet { frames, sets }
}

/// InfoNCE loss for one utterance.
pub struct CpcLoss<'g, F> {
    /// `-sum_{t,k} log softmax(scores)[positive]`, unscaled.
    pub sum: Var<'g, F>,
    pub terms: usize,
    pub set_size: usize,
}

/// InfoNCE over explicit encoder frames `e` (`[T, D_e]`), contexts `c`
/// (`[T, D_ctx]`) and projections `w[k - 1]` (`[D_e, D_ctx]`). Returns
/// `None` when no term exists (`T <= 1`).
pub fn info_nce<'g, F: Real>(e: Var<'g, F>, c: Var<'g, F>, w: &[Var<'g, F>], negatives: &NegativeSet) -> Option<CpcLoss<'g, F>> {
    let frames = e.dim(0);
    let d_e = e.dim(1);
    assert_eq!(c.dim(0), frames, "encoder and context lengths differ");
    assert_eq!(negatives.frames, frames, "negative set drawn for a different length");
    let mut total: Option<Var<'g, F>> = None;
    for (k, sets) in negatives.sets.iter().enumerate().take(w.len()) {
        let n = sets.len();
        if n == 0 {
            continue;
        }
        let m = sets[0].len();
        // pred[t] = W_k c_t, so score(e) = e . pred[t].
        let pred = c.narrow(0, 0, n).matmul(w[k].transpose(0, 1));
        let flat: Vec<usize> = sets.iter().flatten().copied().collect();
        let cand = e.index_select(&flat).reshape(&[n, m, d_e]);
        let scores = (cand * pred.reshape(&[n, 1, d_e])).sum_axis(2, false);
        let positives: Vec<usize> = (0..n).map(|t| t * m).collect();
        let part = scores.log_softmax().take(&positives).sum().neg();
        total = Some(match total {
            Some(acc) => acc + part,
            None => part,
        });
    }
    total.map(|sum| CpcLoss {
        sum,
        terms: negatives.terms(),
        set_size: negatives.set_size(),
    })
}

/// Context network (LSTM then a causal convolution) and step projections.
#[derive(Clone, Debug)]
pub struct CpcModule {
    lstm: Lstm,
    conv: Conv1d,
    pub projections: Vec<ParamId>,
    pub k: usize,
}

/// Batch-level CPC result.
pub struct CpcOutput<'g, F> {
    /// `beta * sum` over all items and terms.
    pub raw: Var<'g, F>,
    /// `beta * mean` over all terms; the training objective.
    pub mean: Var<'g, F>,
    pub terms: usize,
    /// True when no item had two or more frames.
    pub degenerate: bool,
}

impl CpcModule {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, d_e: usize, cfg: &CpcConfig, rng: &mut impl Rng) -> Self {
        let lstm = Lstm::new(store, &format!("{name}.context.lstm"), d_e, cfg.context_dim, rng);
        let conv = Conv1d::new(
            store,
            &format!("{name}.context.conv"),
            cfg.context_dim,
            cfg.context_dim,
            cfg.context_kernel,
            Conv1dSpec::causal(cfg.context_kernel, 1),
            rng,
        );
        let bound = 1.0 / (cfg.context_dim as f64).sqrt();
        let projections = (1..=cfg.k)
            .map(|k| store.uniform(format!("{name}.w.{k}"), &[d_e, cfg.context_dim], bound, rng))
            .collect();
        Self {
            lstm,
            conv,
            projections,
            k: cfg.k,
        }
    }

    /// `[B, T, D_e]` to `[B, T, D_ctx]`; `c_t` depends only on `e_1..e_t`.
    pub fn context<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, e: Var<'g, F>) -> Var<'g, F> {
        let h = self.lstm.forward(g, p, e);
        self.conv.forward(g, p, h.transpose(1, 2)).transpose(1, 2)
    }

    /// CPC loss over a batch `[B, T, D_e]`; item `i` draws negatives with
    /// seed `seeds[i]`.
    pub fn loss<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, e: Var<'g, F>, n_neg: usize, beta: f64, seeds: &[u64]) -> CpcOutput<'g, F> {
        let (batch, frames) = (e.dim(0), e.dim(1));
        assert_eq!(seeds.len(), batch, "one negative-sampling seed per item");
        let zero = || g.constant(svc_autograd::Tensor::scalar(F::zero()));
        if frames <= 1 {
            return CpcOutput {
                raw: zero(),
                mean: zero(),
                terms: 0,
                degenerate: true,
            };
        }
        let c = self.context(g, p, e);
        let w: Vec<_> = self.projections.iter().map(|&id| p.var(g, id)).collect();
        let mut sum: Option<Var<'g, F>> = None;
        let mut terms = 0;
        for (b, &seed) in seeds.iter().enumerate() {
            let eb = e.narrow(0, b, 1).reshape(&[frames, e.dim(2)]);
            let cb = c.narrow(0, b, 1).reshape(&[frames, c.dim(2)]);
            let negatives = sample_negatives(frames, self.k, n_neg, seed);
            if let Some(l) = info_nce(eb, cb, &w, &negatives) {
                terms += l.terms;
                sum = Some(match sum {
                    Some(acc) => acc + l.sum,
                    None => l.sum,
                });
            }
        }
        let sum = sum.expect("frames > 1 yields at least one term");
        CpcOutput {
            raw: sum.scale(beta),
            mean: sum.scale(beta / terms as f64),
            terms,
            degenerate: false,
        }
    }
}
