use crate::exec::Exec;
use crate::{Real, Tensor, Var};

/// Geometry of a 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub dilation: usize,
}

impl Default for Conv1dSpec {
    fn default() -> Self {
        Self {
            stride: 1,
            pad_left: 0,
            pad_right: 0,
            dilation: 1,
        }
    }
}

impl Conv1dSpec {
    /// Stride 1 with padding that keeps the length (extra pad goes right).
    pub fn same(kernel: usize, dilation: usize) -> Self {
        let total = dilation * (kernel - 1);
        Self {
            stride: 1,
            pad_left: total / 2,
            pad_right: total - total / 2,
            dilation,
        }
    }

    /// Left-only padding: output `t` sees inputs `..=t`.
    pub fn causal(kernel: usize, dilation: usize) -> Self {
        Self {
            stride: 1,
            pad_left: dilation * (kernel - 1),
            pad_right: 0,
            dilation,
        }
    }

    pub fn strided(stride: usize, pad: usize) -> Self {
        Self {
            stride,
            pad_left: pad,
            pad_right: pad,
            dilation: 1,
        }
    }

    pub fn out_len(&self, len: usize, kernel: usize) -> usize {
        let padded = len + self.pad_left + self.pad_right;
        let span = self.dilation * (kernel - 1) + 1;
        assert!(
            padded >= span,
            "conv input of length {len} (padded {padded}) shorter than kernel span {span}"
        );
        (padded - span) / self.stride + 1
    }

    /// Range of output positions `t` for which `t*stride + off - pad_left`
    /// lands inside `0..len`.
    fn valid_range(&self, off: usize, len: usize, out_len: usize) -> (usize, usize) {
        let (s, pl) = (self.stride as isize, self.pad_left as isize);
        let off = off as isize;
        let lo = (pl - off).max(0);
        let lo = (lo + s - 1) / s;
        let hi = (len as isize - 1 + pl - off).div_euclid(s) + 1;
        let hi = hi.clamp(0, out_len as isize);
        let lo = lo.min(hi);
        (lo as usize, hi as usize)
    }
}

/// Unfolds `x` (`[channels, len]`) into `[channels * kernel, out_len]`.
pub fn im2col<F: Real>(x: &[F], channels: usize, len: usize, kernel: usize, spec: &Conv1dSpec, out_len: usize) -> Vec<F> {
    let mut col = vec![F::zero(); channels * kernel * out_len];
    for c in 0..channels {
        let xs = &x[c * len..(c + 1) * len];
        for k in 0..kernel {
            let off = k * spec.dilation;
            let row = &mut col[(c * kernel + k) * out_len..(c * kernel + k + 1) * out_len];
            let (lo, hi) = spec.valid_range(off, len, out_len);
            if lo == hi {
                continue;
            }
            if spec.stride == 1 {
                let start = lo + off - spec.pad_left;
                row[lo..hi].copy_from_slice(&xs[start..start + hi - lo]);
            } else {
                for (t, r) in row.iter_mut().enumerate().take(hi).skip(lo) {
                    *r = xs[t * spec.stride + off - spec.pad_left];
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-adds `col` back into `x`.
pub fn col2im<F: Real>(col: &[F], x: &mut [F], channels: usize, len: usize, kernel: usize, spec: &Conv1dSpec, out_len: usize) {
    for c in 0..channels {
        let xs = &mut x[c * len..(c + 1) * len];
        for k in 0..kernel {
            let off = k * spec.dilation;
            let row = &col[(c * kernel + k) * out_len..(c * kernel + k + 1) * out_len];
            let (lo, hi) = spec.valid_range(off, len, out_len);
            for (t, &v) in row.iter().enumerate().take(hi).skip(lo) {
                xs[t * spec.stride + off - spec.pad_left] += v;
            }
        }
    }
}

/// Convolutions with few input taps per output run as shifted
/// multiply-adds; larger ones go through im2col and a matrix product.
const DIRECT_MAX_TAPS: usize = 48;

fn use_direct(cin: usize, kernel: usize) -> bool {
    cin * kernel <= DIRECT_MAX_TAPS
}

/// For tap `k`: the output range `lo..hi` that reads real input, and the
/// input index read by output `lo`. `None` when the tap only sees padding.
fn tap_span(spec: &Conv1dSpec, k: usize, len: usize, out_len: usize) -> Option<(usize, usize, usize)> {
    let off = k * spec.dilation;
    let (lo, hi) = spec.valid_range(off, len, out_len);
    (lo < hi).then(|| (lo, hi, lo * spec.stride + off - spec.pad_left))
}

/// `out[o, t] += sum_{c,k} w[o, c, k] x[c, t*s + k*d - pad]` for one item.
#[allow(clippy::too_many_arguments)]
fn direct_forward<F: Real>(x: &[F], w: &[F], out: &mut [F], cin: usize, len: usize, kernel: usize, spec: &Conv1dSpec, out_len: usize) {
    for (o, row) in out.chunks_mut(out_len).enumerate() {
        for c in 0..cin {
            let xs = &x[c * len..(c + 1) * len];
            for k in 0..kernel {
                let wv = w[(o * cin + c) * kernel + k];
                let Some((lo, hi, start)) = tap_span(spec, k, len, out_len) else {
                    continue;
                };
                if spec.stride == 1 {
                    for (r, &xv) in row[lo..hi].iter_mut().zip(&xs[start..start + hi - lo]) {
                        *r += wv * xv;
                    }
                } else {
                    for (i, r) in row[lo..hi].iter_mut().enumerate() {
                        *r += wv * xs[start + i * spec.stride];
                    }
                }
            }
        }
    }
}

/// Input gradient of [`direct_forward`], accumulated into `gx`.
#[allow(clippy::too_many_arguments)]
fn direct_grad_x<F: Real>(g: &[F], w: &[F], gx: &mut [F], cin: usize, len: usize, kernel: usize, spec: &Conv1dSpec, out_len: usize) {
    for (o, grow) in g.chunks(out_len).enumerate() {
        for c in 0..cin {
            let gxs = &mut gx[c * len..(c + 1) * len];
            for k in 0..kernel {
                let wv = w[(o * cin + c) * kernel + k];
                let Some((lo, hi, start)) = tap_span(spec, k, len, out_len) else {
                    continue;
                };
                if spec.stride == 1 {
                    for (r, &gv) in gxs[start..start + hi - lo].iter_mut().zip(&grow[lo..hi]) {
                        *r += wv * gv;
                    }
                } else {
                    for (i, &gv) in grow[lo..hi].iter().enumerate() {
                        gxs[start + i * spec.stride] += wv * gv;
                    }
                }
            }
        }
    }
}

/// Weight gradient of [`direct_forward`] for one item, `[cout, cin, kernel]`.
#[allow(clippy::too_many_arguments)]
fn direct_grad_w<F: Real>(g: &[F], x: &[F], cout: usize, cin: usize, len: usize, kernel: usize, spec: &Conv1dSpec, out_len: usize) -> Vec<F> {
    let mut gw = vec![F::zero(); cout * cin * kernel];
    for (o, grow) in g.chunks(out_len).enumerate() {
        for c in 0..cin {
            let xs = &x[c * len..(c + 1) * len];
            for k in 0..kernel {
                let Some((lo, hi, start)) = tap_span(spec, k, len, out_len) else {
                    continue;
                };
                let acc = if spec.stride == 1 {
                    dot(&grow[lo..hi], &xs[start..start + hi - lo])
                } else {
                    grow[lo..hi]
                        .iter()
                        .enumerate()
                        .fold(F::zero(), |a, (i, &gv)| a + gv * xs[start + i * spec.stride])
                };
                gw[(o * cin + c) * kernel + k] = acc;
            }
        }
    }
    gw
}

/// Dot product with eight independent accumulators, combined in a fixed
/// order.
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        for j in 0..8 {
            acc[j] += a[i * 8 + j] * b[i * 8 + j];
        }
    }
    let mut tail = F::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn is_pointwise(kernel: usize, spec: &Conv1dSpec) -> bool {
    kernel == 1 && spec.stride == 1 && spec.pad_left == 0 && spec.pad_right == 0
}

fn sum_bias_grad<F: Real>(g: &Tensor<F>) -> Tensor<F> {
    let (b, c, t) = (g.dim(0), g.dim(1), g.dim(2));
    let gd = g.data();
    let mut out = vec![F::zero(); c];
    for bi in 0..b {
        for (ci, acc) in out.iter_mut().enumerate() {
            let base = (bi * c + ci) * t;
            *acc += gd[base..base + t].iter().copied().sum::<F>();
        }
    }
    Tensor::new(&[c], out)
}

/// Folds per-item partial weight gradients in a fixed order.
fn sum_in_order<F: Real>(parts: impl Iterator<Item = Option<Vec<F>>>, shape: &[usize]) -> Tensor<F> {
    let mut acc = Tensor::zeros(shape);
    for p in parts.flatten() {
        for (a, v) in acc.data_mut().iter_mut().zip(p) {
            *a += v;
        }
    }
    acc
}

impl<'g, F: Real> Var<'g, F> {
    /// 1-D convolution of `[batch, in, len]` with weight `[out, in, kernel]`.
    pub fn conv1d(self, weight: Var<'g, F>, bias: Option<Var<'g, F>>, spec: Conv1dSpec) -> Var<'g, F> {
        let x = self.value();
        let w = weight.value();
        assert!(x.rank() == 3 && w.rank() == 3, "conv1d expects [B, C, T] input and [O, C, K] weight");
        let (batch, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
        let (cout, wcin, kernel) = (w.dim(0), w.dim(1), w.dim(2));
        assert_eq!(cin, wcin, "conv1d channel mismatch");
        let out_len = spec.out_len(len, kernel);
        let ck = cin * kernel;

        let mut out = Tensor::zeros(&[batch, cout, out_len]);
        let bias_val = bias.map(|b| b.value());
        {
            let (xd, wd) = (x.data(), w.data());
            let bias_data = bias_val.as_deref().map(Tensor::data);
            Exec::default().for_each_chunk(out.data_mut(), cout * out_len, |b, chunk| {
                let xb = &xd[b * cin * len..(b + 1) * cin * len];
                if use_direct(cin, kernel) {
                    direct_forward(xb, wd, chunk, cin, len, kernel, &spec, out_len);
                    if let Some(bv) = bias_data {
                        for (co, row) in chunk.chunks_mut(out_len).enumerate() {
                            let bc = bv[co];
                            row.iter_mut().for_each(|v| *v += bc);
                        }
                    }
                    return;
                }
                let owned;
                let col: &[F] = if is_pointwise(kernel, &spec) {
                    xb
                } else {
                    owned = im2col(xb, cin, len, kernel, &spec, out_len);
                    &owned
                };
                F::gemm(
                    cout,
                    ck,
                    out_len,
                    F::one(),
                    wd,
                    (ck as isize, 1),
                    col,
                    (out_len as isize, 1),
                    F::zero(),
                    chunk,
                    (out_len as isize, 1),
                );
                if let Some(bv) = bias_data {
                    for (co, row) in chunk.chunks_mut(out_len).enumerate() {
                        let bc = bv[co];
                        row.iter_mut().for_each(|v| *v += bc);
                    }
                }
            });
        }

        let mut parents = vec![self, weight];
        parents.extend(bias);
        self.graph().custom(&parents, out, move |ctx| {
            let (x, w, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad);
            let (need_x, need_w) = (ctx.needs[0], ctx.needs[1]);
            let (xd, wd, gd) = (x.data(), w.data(), g.data());
            let per_item = Exec::default().map_range(batch, |b| {
                let xb = &xd[b * cin * len..(b + 1) * cin * len];
                let gb = &gd[b * cout * out_len..(b + 1) * cout * out_len];
                let pointwise = is_pointwise(kernel, &spec);
                if use_direct(cin, kernel) {
                    let gw = need_w.then(|| direct_grad_w(gb, xb, cout, cin, len, kernel, &spec, out_len));
                    let gx = need_x.then(|| {
                        let mut gx = vec![F::zero(); cin * len];
                        direct_grad_x(gb, wd, &mut gx, cin, len, kernel, &spec, out_len);
                        gx
                    });
                    return (gx, gw);
                }
                let gw = need_w.then(|| {
                    let owned;
                    let col: &[F] = if pointwise {
                        xb
                    } else {
                        owned = im2col(xb, cin, len, kernel, &spec, out_len);
                        &owned
                    };
                    // g [cout, T'] @ col^T [T', ck]
                    let mut gw = vec![F::zero(); cout * ck];
                    F::gemm(
                        cout,
                        out_len,
                        ck,
                        F::one(),
                        gb,
                        (out_len as isize, 1),
                        col,
                        (1, out_len as isize),
                        F::zero(),
                        &mut gw,
                        (ck as isize, 1),
                    );
                    gw
                });
                let gx = need_x.then(|| {
                    // w^T [ck, cout] @ g [cout, T']
                    let mut gcol = vec![F::zero(); ck * out_len];
                    F::gemm(
                        ck,
                        cout,
                        out_len,
                        F::one(),
                        wd,
                        (1, ck as isize),
                        gb,
                        (out_len as isize, 1),
                        F::zero(),
                        &mut gcol,
                        (out_len as isize, 1),
                    );
                    if pointwise {
                        gcol
                    } else {
                        let mut gx = vec![F::zero(); cin * len];
                        col2im(&gcol, &mut gx, cin, len, kernel, &spec, out_len);
                        gx
                    }
                });
                (gx, gw)
            });
            let mut gx_all = need_x.then(|| Vec::with_capacity(batch * cin * len));
            let mut gw_parts = Vec::with_capacity(batch);
            for (gx, gw) in per_item {
                if let (Some(all), Some(gx)) = (gx_all.as_mut(), gx) {
                    all.extend(gx);
                }
                gw_parts.push(gw);
            }
            let mut grads = vec![
                gx_all.map(|d| Tensor::new(x.shape(), d)),
                need_w.then(|| sum_in_order(gw_parts.into_iter(), w.shape())),
            ];
            if ctx.inputs.len() == 3 {
                grads.push(ctx.needs[2].then(|| sum_bias_grad(g)));
            }
            grads
        })
    }

    /// Transposed 1-D convolution of `[batch, in, len]` with weight
    /// `[in, out, kernel]`; output length is `(len - 1) * stride - 2 * pad + kernel`.
    pub fn conv_transpose1d(self, weight: Var<'g, F>, bias: Option<Var<'g, F>>, stride: usize, pad: usize) -> Var<'g, F> {
        let x = self.value();
        let w = weight.value();
        assert!(x.rank() == 3 && w.rank() == 3, "conv_transpose1d expects rank-3 input and weight");
        let (batch, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
        let (wcin, cout, kernel) = (w.dim(0), w.dim(1), w.dim(2));
        assert_eq!(cin, wcin, "conv_transpose1d channel mismatch");
        let out_len = ((len - 1) * stride + kernel)
            .checked_sub(2 * pad)
            .expect("conv_transpose1d padding too large");
        // The output is the col2im of `w^T @ x` under this geometry.
        let spec = Conv1dSpec::strided(stride, pad);
        let ck = cout * kernel;

        let mut out = Tensor::zeros(&[batch, cout, out_len]);
        let bias_val = bias.map(|b| b.value());
        {
            let (xd, wd) = (x.data(), w.data());
            let bias_data = bias_val.as_deref().map(Tensor::data);
            Exec::default().for_each_chunk(out.data_mut(), cout * out_len, |b, chunk| {
                let xb = &xd[b * cin * len..(b + 1) * cin * len];
                let mut cols = vec![F::zero(); ck * len];
                F::gemm(
                    ck,
                    cin,
                    len,
                    F::one(),
                    wd,
                    (1, ck as isize),
                    xb,
                    (len as isize, 1),
                    F::zero(),
                    &mut cols,
                    (len as isize, 1),
                );
                col2im(&cols, chunk, cout, out_len, kernel, &spec, len);
                if let Some(bv) = bias_data {
                    for (co, row) in chunk.chunks_mut(out_len).enumerate() {
                        let bc = bv[co];
                        row.iter_mut().for_each(|v| *v += bc);
                    }
                }
            });
        }

        let mut parents = vec![self, weight];
        parents.extend(bias);
        self.graph().custom(&parents, out, move |ctx| {
            let (x, w, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad);
            let (need_x, need_w) = (ctx.needs[0], ctx.needs[1]);
            let (xd, wd, gd) = (x.data(), w.data(), g.data());
            let per_item = Exec::default().map_range(batch, |b| {
                let xb = &xd[b * cin * len..(b + 1) * cin * len];
                let gb = &gd[b * cout * out_len..(b + 1) * cout * out_len];
                let gcols = im2col(gb, cout, out_len, kernel, &spec, len);
                let gx = need_x.then(|| {
                    // w [cin, ck] @ gcols [ck, len]
                    let mut gx = vec![F::zero(); cin * len];
                    F::gemm(
                        cin,
                        ck,
                        len,
                        F::one(),
                        wd,
                        (ck as isize, 1),
                        &gcols,
                        (len as isize, 1),
                        F::zero(),
                        &mut gx,
                        (len as isize, 1),
                    );
                    gx
                });
                let gw = need_w.then(|| {
                    // x [cin, len] @ gcols^T [len, ck]
                    let mut gw = vec![F::zero(); cin * ck];
                    F::gemm(
                        cin,
                        len,
                        ck,
                        F::one(),
                        xb,
                        (len as isize, 1),
                        &gcols,
                        (1, len as isize),
                        F::zero(),
                        &mut gw,
                        (ck as isize, 1),
                    );
                    gw
                });
                (gx, gw)
            });
            let mut gx_all = need_x.then(|| Vec::with_capacity(batch * cin * len));
            let mut gw_parts = Vec::with_capacity(batch);
            for (gx, gw) in per_item {
                if let (Some(all), Some(gx)) = (gx_all.as_mut(), gx) {
                    all.extend(gx);
                }
                gw_parts.push(gw);
            }
            let mut grads = vec![
                gx_all.map(|d| Tensor::new(x.shape(), d)),
                need_w.then(|| sum_in_order(gw_parts.into_iter(), w.shape())),
            ];
            if ctx.inputs.len() == 3 {
                grads.push(ctx.needs[2].then(|| sum_bias_grad(g)));
            }
            grads
        })
    }
}
