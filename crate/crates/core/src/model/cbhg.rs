use rand::Rng;
use svc_autograd::{Graph, ParamStore, Real, Var};

use crate::config::CbhgConfig;
use crate::nn::{BiGru, Bind, Conv1d, Linear};

/// Gated residual layer: `x + t * (relu(W_h x) - x)` with `t = sigmoid(W_t x)`.
#[derive(Clone, Debug)]
struct Highway {
    h: Linear,
    t: Linear,
}

/// Convolution bank, highway stack and bidirectional GRU encoder.
///
/// Maps `[B, T, d_in]` to `[B, T, d_out]` for any `T >= 1`.
#[derive(Clone, Debug)]
pub struct Cbhg {
    input: Linear,
    bank: Vec<Conv1d>,
    proj1: Conv1d,
    proj2: Conv1d,
    highways: Vec<Highway>,
    gru: BiGru,
    output: Linear,
    pub d_in: usize,
    pub d_out: usize,
}

impl Cbhg {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, d_in: usize, d_out: usize, cfg: &CbhgConfig, rng: &mut impl Rng) -> Self {
        let c = cfg.channels;
        let input = Linear::new(store, &format!("{name}.input"), d_in, c, rng);
        let bank = (1..=cfg.bank_size)
            .map(|k| Conv1d::same(store, &format!("{name}.bank.{k}"), c, c, k, 1, rng))
            .collect();
        let proj1 = Conv1d::same(store, &format!("{name}.proj1"), c * cfg.bank_size, c, 3, 1, rng);
        let proj2 = Conv1d::same(store, &format!("{name}.proj2"), c, c, 3, 1, rng);
        let highways = (0..cfg.highway_layers)
            .map(|i| Highway {
                h: Linear::new(store, &format!("{name}.highway.{i}.h"), c, c, rng),
                t: Linear::new(store, &format!("{name}.highway.{i}.t"), c, c, rng),
            })
            .collect();
        let gru = BiGru::new(store, &format!("{name}.gru"), c, cfg.gru_hidden, rng);
        let output = Linear::new(store, &format!("{name}.output"), 2 * cfg.gru_hidden, d_out, rng);
        Self {
            input,
            bank,
            proj1,
            proj2,
            highways,
            gru,
            output,
            d_in,
            d_out,
        }
    }

    pub fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, x: Var<'g, F>) -> Var<'g, F> {
        assert_eq!(x.dim(2), self.d_in, "encoder input dimension");
        let pre = self.input.forward(g, p, x).relu().transpose(1, 2);
        let banked: Vec<_> = self.bank.iter().map(|conv| conv.forward(g, p, pre).relu()).collect();
        let stacked = g.concat(&banked, 1).max_pool1d(2, 1, 0, 1);
        let y = self.proj1.forward(g, p, stacked).relu();
        let y = self.proj2.forward(g, p, y) + pre;
        let mut h = y.transpose(1, 2);
        for hw in &self.highways {
            let cand = hw.h.forward(g, p, h).relu();
            let gate = hw.t.forward(g, p, h).sigmoid();
            h = h + gate * (cand - h);
        }
        let rnn = self.gru.forward(g, p, h);
        self.output.forward(g, p, rnn)
    }
}
