//! GRU and LSTM layers with hand-written backpropagation through time.
//!
//! Each layer records a single graph node for the whole sequence instead of
//! a dozen per timestep. The input projection `x @ W_x + b_x` is an ordinary
//! [`Linear`]; the fused op takes its output and runs the recurrence.

use rand::Rng;
use svc_autograd::{Graph, ParamId, ParamStore, Real, Tensor, Var};

use super::{Bind, Linear};

fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `out = h @ w + bias`, with `h` `[rows, k]`, `w` `[k, n]`.
fn affine<F: Real>(h: &[F], w: &[F], bias: &[F], rows: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(rows * n);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    F::gemm(rows, k, n, F::one(), h, (k as isize, 1), w, (n as isize, 1), F::one(), &mut out, (n as isize, 1));
    out
}

/// `acc += a^T @ b`, with `a` `[rows, m]`, `b` `[rows, n]`.
fn add_at_b<F: Real>(acc: &mut [F], a: &[F], b: &[F], rows: usize, m: usize, n: usize) {
    F::gemm(m, rows, n, F::one(), a, (1, m as isize), b, (n as isize, 1), F::one(), acc, (n as isize, 1));
}

/// `out = d @ w^T`, with `d` `[rows, n]`, `w` `[k, n]`.
fn mul_bt<F: Real>(d: &[F], w: &[F], rows: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); rows * k];
    F::gemm(rows, n, k, F::one(), d, (n as isize, 1), w, (1, n as isize), F::zero(), &mut out, (k as isize, 1));
    out
}

/// Rows `[b, t, :]` of a `[B, T, width]` buffer, gathered into `[B, width]`.
fn gather_step<F: Real>(x: &[F], batch: usize, steps: usize, width: usize, t: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(batch * width);
    for b in 0..batch {
        let base = (b * steps + t) * width;
        out.extend_from_slice(&x[base..base + width]);
    }
    out
}

fn scatter_step<F: Real>(dst: &mut [F], src: &[F], batch: usize, steps: usize, width: usize, t: usize) {
    for b in 0..batch {
        let base = (b * steps + t) * width;
        dst[base..base + width].copy_from_slice(&src[b * width..(b + 1) * width]);
    }
}

fn time_order(steps: usize, reverse: bool) -> Vec<usize> {
    if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    }
}

fn bias_grad<F: Real>(acc: &mut [F], d: &[F], rows: usize) {
    let n = acc.len();
    for r in 0..rows {
        for (a, &v) in acc.iter_mut().zip(&d[r * n..(r + 1) * n]) {
            *a += v;
        }
    }
}

/// GRU recurrence over a projected input `xw` (`[B, T, 3H]`, gate order
/// reset, update, candidate) with recurrent weight `wh` (`[H, 3H]`) and bias
/// `bh` (`[3H]`). Returns every hidden state, `[B, T, H]`; with `reverse` the
/// sequence is consumed from the end and outputs stay time-aligned.
pub fn gru_sequence<'g, F: Real>(xw: Var<'g, F>, wh: Var<'g, F>, bh: Var<'g, F>, reverse: bool) -> Var<'g, F> {
    let x = xw.value();
    let (batch, steps, h3) = (x.dim(0), x.dim(1), x.dim(2));
    let hid = h3 / 3;
    assert_eq!(wh.shape(), vec![hid, h3], "GRU recurrent weight shape");
    let (w, bias) = (wh.value(), bh.value());
    let bh_ = batch * hid;

    // Saved per processed step: h_prev, r, z, n, hn.
    let mut saved: Vec<[Vec<F>; 5]> = Vec::with_capacity(steps);
    let mut out = vec![F::zero(); batch * steps * hid];
    let mut h = vec![F::zero(); bh_];
    for t in time_order(steps, reverse) {
        let xt = gather_step(x.data(), batch, steps, h3, t);
        let hw = affine(&h, w.data(), bias.data(), batch, hid, h3);
        let (mut r, mut z, mut n, mut hn) = (vec![F::zero(); bh_], vec![F::zero(); bh_], vec![F::zero(); bh_], vec![F::zero(); bh_]);
        let mut h_new = vec![F::zero(); bh_];
        for b in 0..batch {
            for j in 0..hid {
                let (o, i) = (b * hid + j, b * h3 + j);
                let rv = sigmoid(xt[i] + hw[i]);
                let zv = sigmoid(xt[i + hid] + hw[i + hid]);
                let hnv = hw[i + 2 * hid];
                let nv = (xt[i + 2 * hid] + rv * hnv).tanh();
                h_new[o] = nv + zv * (h[o] - nv);
                (r[o], z[o], n[o], hn[o]) = (rv, zv, nv, hnv);
            }
        }
        scatter_step(&mut out, &h_new, batch, steps, hid, t);
        saved.push([std::mem::replace(&mut h, h_new), r, z, n, hn]);
    }

    let value = Tensor::new(&[batch, steps, hid], out);
    xw.graph().custom(&[xw, wh, bh], value, move |ctx| {
        let g = ctx.grad.data();
        let wd = ctx.inputs[1].data();
        let mut dx = vec![F::zero(); batch * steps * h3];
        let mut dw = vec![F::zero(); hid * h3];
        let mut db = vec![F::zero(); h3];
        let mut carry = vec![F::zero(); bh_];
        for (t, [h_prev, r, z, n, hn]) in time_order(steps, reverse).into_iter().zip(&saved).rev() {
            let gt = gather_step(g, batch, steps, hid, t);
            let mut dxt = vec![F::zero(); batch * h3];
            let mut dgh = vec![F::zero(); batch * h3];
            let mut direct = vec![F::zero(); bh_];
            for b in 0..batch {
                for j in 0..hid {
                    let (o, i) = (b * hid + j, b * h3 + j);
                    let dh = carry[o] + gt[o];
                    let dn = dh * (F::one() - z[o]);
                    let dz = dh * (h_prev[o] - n[o]);
                    direct[o] = dh * z[o];
                    let dn_pre = dn * (F::one() - n[o] * n[o]);
                    let dr = dn_pre * hn[o];
                    let dr_pre = dr * r[o] * (F::one() - r[o]);
                    let dz_pre = dz * z[o] * (F::one() - z[o]);
                    dxt[i] = dr_pre;
                    dxt[i + hid] = dz_pre;
                    dxt[i + 2 * hid] = dn_pre;
                    dgh[i] = dr_pre;
                    dgh[i + hid] = dz_pre;
                    dgh[i + 2 * hid] = dn_pre * r[o];
                }
            }
            scatter_step(&mut dx, &dxt, batch, steps, h3, t);
            add_at_b(&mut dw, h_prev, &dgh, batch, hid, h3);
            bias_grad(&mut db, &dgh, batch);
            let back = mul_bt(&dgh, wd, batch, hid, h3);
            carry = direct.iter().zip(&back).map(|(&a, &b)| a + b).collect();
        }
        vec![
            Some(Tensor::new(&[batch, steps, h3], dx)),
            Some(Tensor::new(&[hid, h3], dw)),
            Some(Tensor::new(&[h3], db)),
        ]
    })
}

/// LSTM recurrence over a projected input `xw` (`[B, T, 4H]`, gate order
/// input, forget, cell, output) with recurrent weight `wh` (`[H, 4H]`) and
/// bias `bh` (`[4H]`). Returns every hidden state, `[B, T, H]`.
pub fn lstm_sequence<'g, F: Real>(xw: Var<'g, F>, wh: Var<'g, F>, bh: Var<'g, F>) -> Var<'g, F> {
    let x = xw.value();
    let (batch, steps, h4) = (x.dim(0), x.dim(1), x.dim(2));
    let hid = h4 / 4;
    assert_eq!(wh.shape(), vec![hid, h4], "LSTM recurrent weight shape");
    let (w, bias) = (wh.value(), bh.value());
    let bh_ = batch * hid;

    // Saved per step: h_prev, c_prev, i, f, g, o, tanh(c).
    let mut saved: Vec<[Vec<F>; 7]> = Vec::with_capacity(steps);
    let mut out = vec![F::zero(); batch * steps * hid];
    let mut h = vec![F::zero(); bh_];
    let mut c = vec![F::zero(); bh_];
    for t in 0..steps {
        let xt = gather_step(x.data(), batch, steps, h4, t);
        let hw = affine(&h, w.data(), bias.data(), batch, hid, h4);
        let mut gates: [Vec<F>; 5] = std::array::from_fn(|_| vec![F::zero(); bh_]);
        let mut h_new = vec![F::zero(); bh_];
        let mut c_new = vec![F::zero(); bh_];
        for b in 0..batch {
            for j in 0..hid {
                let (o, i) = (b * hid + j, b * h4 + j);
                let iv = sigmoid(xt[i] + hw[i]);
                let fv = sigmoid(xt[i + hid] + hw[i + hid]);
                let gv = (xt[i + 2 * hid] + hw[i + 2 * hid]).tanh();
                let ov = sigmoid(xt[i + 3 * hid] + hw[i + 3 * hid]);
                c_new[o] = fv * c[o] + iv * gv;
                let tc = c_new[o].tanh();
                h_new[o] = ov * tc;
                for (slot, v) in gates.iter_mut().zip([iv, fv, gv, ov, tc]) {
                    slot[o] = v;
                }
            }
        }
        scatter_step(&mut out, &h_new, batch, steps, hid, t);
        let [iv, fv, gv, ov, tc] = gates;
        let h_prev = std::mem::replace(&mut h, h_new);
        let c_prev = std::mem::replace(&mut c, c_new);
        saved.push([h_prev, c_prev, iv, fv, gv, ov, tc]);
    }

    let value = Tensor::new(&[batch, steps, hid], out);
    xw.graph().custom(&[xw, wh, bh], value, move |ctx| {
        let g = ctx.grad.data();
        let wd = ctx.inputs[1].data();
        let mut dx = vec![F::zero(); batch * steps * h4];
        let mut dw = vec![F::zero(); hid * h4];
        let mut db = vec![F::zero(); h4];
        let mut dh_carry = vec![F::zero(); bh_];
        let mut dc_carry = vec![F::zero(); bh_];
        for (t, [h_prev, c_prev, iv, fv, gv, ov, tc]) in saved.iter().enumerate().rev() {
            let gt = gather_step(g, batch, steps, hid, t);
            let mut dpre = vec![F::zero(); batch * h4];
            for b in 0..batch {
                for j in 0..hid {
                    let (o, i) = (b * hid + j, b * h4 + j);
                    let dh = dh_carry[o] + gt[o];
                    let dc = dc_carry[o] + dh * ov[o] * (F::one() - tc[o] * tc[o]);
                    let d_o = dh * tc[o];
                    let d_i = dc * gv[o];
                    let d_g = dc * iv[o];
                    let d_f = dc * c_prev[o];
                    dc_carry[o] = dc * fv[o];
                    dpre[i] = d_i * iv[o] * (F::one() - iv[o]);
                    dpre[i + hid] = d_f * fv[o] * (F::one() - fv[o]);
                    dpre[i + 2 * hid] = d_g * (F::one() - gv[o] * gv[o]);
                    dpre[i + 3 * hid] = d_o * ov[o] * (F::one() - ov[o]);
                }
            }
            scatter_step(&mut dx, &dpre, batch, steps, h4, t);
            add_at_b(&mut dw, h_prev, &dpre, batch, hid, h4);
            bias_grad(&mut db, &dpre, batch);
            dh_carry = mul_bt(&dpre, wd, batch, hid, h4);
        }
        vec![
            Some(Tensor::new(&[batch, steps, h4], dx)),
            Some(Tensor::new(&[hid, h4], dw)),
            Some(Tensor::new(&[h4], db)),
        ]
    })
}

/// Single-direction GRU layer.
#[derive(Clone, Debug)]
pub struct Gru {
    pub input: Linear,
    pub wh: ParamId,
    pub bh: ParamId,
    pub hidden: usize,
}

impl Gru {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, din: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            input: Linear::new(store, &format!("{name}.ih"), din, 3 * hidden, rng),
            wh: store.uniform(format!("{name}.hh.w"), &[hidden, 3 * hidden], bound, rng),
            bh: store.uniform(format!("{name}.hh.b"), &[3 * hidden], bound, rng),
            hidden,
        }
    }

    /// `[B, T, D]` to `[B, T, H]`.
    pub fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, x: Var<'g, F>, reverse: bool) -> Var<'g, F> {
        let xw = self.input.forward(g, p, x);
        gru_sequence(xw, p.var(g, self.wh), p.var(g, self.bh), reverse)
    }
}

/// Bidirectional GRU; output concatenates forward and backward states.
#[derive(Clone, Debug)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

impl BiGru {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, din: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            fwd: Gru::new(store, &format!("{name}.fwd"), din, hidden, rng),
            bwd: Gru::new(store, &format!("{name}.bwd"), din, hidden, rng),
        }
    }

    /// `[B, T, D]` to `[B, T, 2H]`.
    pub fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, x: Var<'g, F>) -> Var<'g, F> {
        let f = self.fwd.forward(g, p, x, false);
        let b = self.bwd.forward(g, p, x, true);
        g.concat(&[f, b], 2)
    }
}

/// Forward-only LSTM layer.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub input: Linear,
    pub wh: ParamId,
    pub bh: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, din: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            input: Linear::new(store, &format!("{name}.ih"), din, 4 * hidden, rng),
            wh: store.uniform(format!("{name}.hh.w"), &[hidden, 4 * hidden], bound, rng),
            bh: store.uniform(format!("{name}.hh.b"), &[4 * hidden], bound, rng),
            hidden,
        }
    }

    pub fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, x: Var<'g, F>) -> Var<'g, F> {
        let xw = self.input.forward(g, p, x);
        lstm_sequence(xw, p.var(g, self.wh), p.var(g, self.bh))
    }
}
