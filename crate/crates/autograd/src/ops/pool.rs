use crate::{Real, Tensor, Var};

impl<'g, F: Real> Var<'g, F> {
    /// Max pooling over the last axis of `[batch, channels, len]`; padded
    /// positions never win.
    pub fn max_pool1d(self, kernel: usize, stride: usize, pad_left: usize, pad_right: usize) -> Var<'g, F> {
        let x = self.value();
        let (rows, len) = (x.numel() / x.dim(x.rank() - 1), x.dim(x.rank() - 1));
        let padded = len + pad_left + pad_right;
        assert!(padded >= kernel, "max_pool1d input shorter than kernel");
        let out_len = (padded - kernel) / stride + 1;
        let xd = x.data();
        let mut data = Vec::with_capacity(rows * out_len);
        let mut argmax = Vec::with_capacity(rows * out_len);
        for r in 0..rows {
            let xs = &xd[r * len..(r + 1) * len];
            for t in 0..out_len {
                let mut best: Option<(usize, F)> = None;
                for k in 0..kernel {
                    let pos = (t * stride + k) as isize - pad_left as isize;
                    if pos < 0 || pos as usize >= len {
                        continue;
                    }
                    let v = xs[pos as usize];
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some((pos as usize, v));
                    }
                }
                let (pos, v) = best.expect("pooling window covers only padding");
                data.push(v);
                argmax.push(r * len + pos);
            }
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = out_len;
        let in_shape = x.shape().to_vec();
        self.graph()
            .custom(&[self], Tensor::new(&shape, data), move |ctx| {
                let mut gx = Tensor::zeros(&in_shape);
                let gxd = gx.data_mut();
                for (&i, &g) in argmax.iter().zip(ctx.grad.data()) {
                    gxd[i] += g;
                }
                vec![Some(gx)]
            })
    }

    /// Average pooling over the last axis; zero padding counts toward the
    /// divisor.
    pub fn avg_pool1d(self, kernel: usize, stride: usize, pad: usize) -> Var<'g, F> {
        let x = self.value();
        let (rows, len) = (x.numel() / x.dim(x.rank() - 1), x.dim(x.rank() - 1));
        let padded = len + 2 * pad;
        assert!(padded >= kernel, "avg_pool1d input shorter than kernel");
        let out_len = (padded - kernel) / stride + 1;
        let inv = F::c(1.0 / kernel as f64);
        let window = move |t: usize| {
            let lo = (t * stride) as isize - pad as isize;
            let hi = lo + kernel as isize;
            (lo.max(0) as usize, (hi.min(len as isize)).max(0) as usize)
        };
        let xd = x.data();
        let mut data = Vec::with_capacity(rows * out_len);
        for r in 0..rows {
            let xs = &xd[r * len..(r + 1) * len];
            for t in 0..out_len {
                let (lo, hi) = window(t);
                let s: F = xs[lo..hi.max(lo)].iter().copied().sum();
                data.push(s * inv);
            }
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = out_len;
        let in_shape = x.shape().to_vec();
        self.graph()
            .custom(&[self], Tensor::new(&shape, data), move |ctx| {
                let mut gx = Tensor::zeros(&in_shape);
                let gd = ctx.grad.data();
                let gxd = gx.data_mut();
                for r in 0..rows {
                    for t in 0..out_len {
                        let (lo, hi) = window(t);
                        let g = gd[r * out_len + t] * inv;
                        for v in &mut gxd[r * len + lo..r * len + hi.max(lo)] {
                            *v += g;
                        }
                    }
                }
                vec![Some(gx)]
            })
    }
}
