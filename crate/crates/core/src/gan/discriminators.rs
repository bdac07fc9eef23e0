use rand::Rng;
use svc_autograd::{Conv1dSpec, Graph, ParamStore, Real, Var};

use crate::config::DiscriminatorConfig;
use crate::nn::{Bind, Conv1d};

const SLOPE: f64 = 0.1;

/// Per-layer activations and the final score map of one discriminator.
pub struct DiscOutput<'g, F> {
    pub features: Vec<Var<'g, F>>,
    pub score: Var<'g, F>,
}

impl<'g, F: Real> DiscOutput<'g, F> {
    /// Splits a pass over `[real; fake]` stacked on the batch axis into the
    /// two halves.
    pub fn split(&self) -> (DiscOutput<'g, F>, DiscOutput<'g, F>) {
        let half = |v: Var<'g, F>, second: bool| {
            let n = v.dim(0) / 2;
            v.narrow(0, if second { n } else { 0 }, n)
        };
        let part = |second| DiscOutput {
            features: self.features.iter().map(|&f| half(f, second)).collect(),
            score: half(self.score, second),
        };
        (part(false), part(true))
    }
}

/// Runs a conv stack with leaky ReLU after every layer but the last.
fn run_stack<'g, F: Real>(g: &'g Graph<F>, p: Bind<'_, F>, layers: &[Conv1d], post: &Conv1d, mut x: Var<'g, F>) -> DiscOutput<'g, F> {
    let mut features = Vec::with_capacity(layers.len() + 1);
    for conv in layers {
        x = conv.forward(g, p, x).leaky_relu(SLOPE);
        features.push(x);
    }
    let score = post.forward(g, p, x);
    features.push(score);
    DiscOutput { features, score }
}

/// Views the wave as a `period`-column grid and convolves down the columns.
#[derive(Clone, Debug)]
pub struct PeriodDiscriminator {
    period: usize,
    layers: Vec<Conv1d>,
    post: Conv1d,
}

impl PeriodDiscriminator {
    fn new<F: Real>(store: &mut ParamStore<F>, name: &str, period: usize, channels: &[usize], rng: &mut impl Rng) -> Self {
        let mut layers = Vec::new();
        let mut cin = 1;
        for (i, &c) in channels.iter().enumerate() {
            let stride = if i + 1 == channels.len() { 1 } else { 3 };
            layers.push(Conv1d::new(store, &format!("{name}.conv.{i}"), cin, c, 5, Conv1dSpec::strided(stride, 2), rng));
            cin = c;
        }
        let post = Conv1d::same(store, &format!("{name}.post"), cin, 1, 3, 1, rng);
        Self { period, layers, post }
    }

    fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, wave: Var<'g, F>) -> DiscOutput<'g, F> {
        let (batch, n) = (wave.dim(0), wave.dim(1));
        let pad = (self.period - n % self.period) % self.period;
        let rows = (n + pad) / self.period;
        let grid = wave
            .pad_last(0, pad)
            .reshape(&[batch, rows, self.period])
            .transpose(1, 2)
            .reshape(&[batch * self.period, 1, rows]);
        run_stack(g, p, &self.layers, &self.post, grid)
    }
}

/// Convolves the wave after `downsample` rounds of average pooling.
#[derive(Clone, Debug)]
pub struct ScaleDiscriminator {
    downsample: usize,
    layers: Vec<Conv1d>,
    post: Conv1d,
}

impl ScaleDiscriminator {
    fn new<F: Real>(store: &mut ParamStore<F>, name: &str, downsample: usize, channels: &[usize], rng: &mut impl Rng) -> Self {
        let mut layers = Vec::new();
        let mut cin = 1;
        for (i, &c) in channels.iter().enumerate() {
            let (kernel, spec) = match i {
                0 => (15, Conv1dSpec::same(15, 1)),
                _ if i + 1 == channels.len() => (5, Conv1dSpec::same(5, 1)),
                _ => (11, Conv1dSpec::strided(4, 5)),
            };
            layers.push(Conv1d::new(store, &format!("{name}.conv.{i}"), cin, c, kernel, spec, rng));
            cin = c;
        }
        let post = Conv1d::same(store, &format!("{name}.post"), cin, 1, 3, 1, rng);
        Self { downsample, layers, post }
    }

    fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, wave: Var<'g, F>) -> DiscOutput<'g, F> {
        let (batch, n) = (wave.dim(0), wave.dim(1));
        let mut x = wave.reshape(&[batch, 1, n]);
        for _ in 0..self.downsample {
            x = x.avg_pool1d(4, 2, 2);
        }
        run_stack(g, p, &self.layers, &self.post, x)
    }
}

/// Multi-period and multi-scale discriminators.
#[derive(Clone, Debug)]
pub struct DiscriminatorBank {
    pub periods: Vec<PeriodDiscriminator>,
    pub scales: Vec<ScaleDiscriminator>,
}

impl DiscriminatorBank {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, cfg: &DiscriminatorConfig, rng: &mut impl Rng) -> Self {
        let periods = cfg
            .periods
            .iter()
            .map(|&p| PeriodDiscriminator::new(store, &format!("{name}.mpd.{p}"), p, &cfg.period_channels, rng))
            .collect();
        let scales = (0..cfg.scales)
            .map(|s| ScaleDiscriminator::new(store, &format!("{name}.msd.{s}"), s, &cfg.scale_channels, rng))
            .collect();
        Self { periods, scales }
    }

    /// Every discriminator's output for waves `[B, N]`.
    pub fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, wave: Var<'g, F>) -> Vec<DiscOutput<'g, F>> {
        let mut out: Vec<_> = self.periods.iter().map(|d| d.forward(g, p, wave)).collect();
        out.extend(self.scales.iter().map(|d| d.forward(g, p, wave)));
        out
    }

    pub fn len(&self) -> usize {
        self.periods.len() + self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
