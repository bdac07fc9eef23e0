use super::elementwise::strided_gather;
use super::reduce::split_axis;
use crate::tensor::strides;
use crate::{Graph, Real, Tensor, Var};

impl<'g, F: Real> Var<'g, F> {
    pub fn reshape(self, shape: &[usize]) -> Var<'g, F> {
        let x = self.value();
        let value = (*x).clone().reshape(shape);
        let in_shape = x.shape().to_vec();
        self.graph().custom(&[self], value, move |ctx| {
            vec![Some(ctx.grad.clone().reshape(&in_shape))]
        })
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(self, perm: &[usize]) -> Var<'g, F> {
        let x = self.value();
        let value = permute_tensor(&x, perm);
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        self.graph().custom(&[self], value, move |ctx| {
            vec![Some(permute_tensor(ctx.grad, &inverse))]
        })
    }

    pub fn transpose(self, a: usize, b: usize) -> Var<'g, F> {
        let mut perm: Vec<usize> = (0..self.shape().len()).collect();
        perm.swap(a, b);
        self.permute(&perm)
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'g, F> {
        let x = self.value();
        let (outer, n, inner) = split_axis(x.shape(), axis);
        assert!(start + len <= n, "narrow {start}+{len} exceeds axis length {n}");
        let xd = x.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&xd[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        let in_shape = x.shape().to_vec();
        self.graph()
            .custom(&[self], Tensor::new(&shape, data), move |ctx| {
                let mut gx = Tensor::zeros(&in_shape);
                let gd = ctx.grad.data();
                let gxd = gx.data_mut();
                for o in 0..outer {
                    gxd[(o * n + start) * inner..(o * n + start + len) * inner]
                        .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            })
    }

    /// Rows `indices` of axis 0; gradients scatter-add back.
    pub fn index_select(self, indices: &[usize]) -> Var<'g, F> {
        let x = self.value();
        let rows = x.dim(0);
        let width = x.numel() / rows.max(1);
        let xd = x.data();
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            assert!(i < rows, "index {i} out of range for {rows} rows");
            data.extend_from_slice(&xd[i * width..(i + 1) * width]);
        }
        let mut shape = x.shape().to_vec();
        shape[0] = indices.len();
        let in_shape = x.shape().to_vec();
        let indices = indices.to_vec();
        self.graph()
            .custom(&[self], Tensor::new(&shape, data), move |ctx| {
                let mut gx = Tensor::zeros(&in_shape);
                let gd = ctx.grad.data();
                let gxd = gx.data_mut();
                for (k, &i) in indices.iter().enumerate() {
                    for (a, &b) in gxd[i * width..(i + 1) * width]
                        .iter_mut()
                        .zip(&gd[k * width..(k + 1) * width])
                    {
                        *a += b;
                    }
                }
                vec![Some(gx)]
            })
    }

    /// Picks elements by flat (row-major) index into a 1-D result.
    pub fn take(self, flat: &[usize]) -> Var<'g, F> {
        let x = self.value();
        let xd = x.data();
        let data = flat.iter().map(|&i| xd[i]).collect();
        let in_shape = x.shape().to_vec();
        let flat = flat.to_vec();
        self.graph()
            .custom(&[self], Tensor::new(&[flat.len()], data), move |ctx| {
                let mut gx = Tensor::zeros(&in_shape);
                let gxd = gx.data_mut();
                for (&i, &g) in flat.iter().zip(ctx.grad.data()) {
                    gxd[i] += g;
                }
                vec![Some(gx)]
            })
    }

    /// Zero padding on the last axis.
    pub fn pad_last(self, left: usize, right: usize) -> Var<'g, F> {
        if left == 0 && right == 0 {
            return self;
        }
        let g = self.graph();
        let mut parts = Vec::with_capacity(3);
        let shape = self.shape();
        let axis = shape.len() - 1;
        if left > 0 {
            let mut s = shape.clone();
            s[axis] = left;
            parts.push(g.constant(Tensor::zeros(&s)));
        }
        parts.push(self);
        if right > 0 {
            let mut s = shape.clone();
            s[axis] = right;
            parts.push(g.constant(Tensor::zeros(&s)));
        }
        g.concat(&parts, axis)
    }
}

impl<F: Real> Graph<F> {
    /// Joins variables along `axis`; all other axes must agree.
    pub fn concat<'g>(&'g self, parts: &[Var<'g, F>], axis: usize) -> Var<'g, F> {
        assert!(!parts.is_empty(), "concat of nothing");
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let first = values[0].shape().to_vec();
        let (outer, _, inner) = split_axis(&first, axis);
        let lens: Vec<usize> = values
            .iter()
            .map(|v| {
                let s = v.shape();
                assert!(
                    s.len() == first.len()
                        && s.iter()
                            .zip(&first)
                            .enumerate()
                            .all(|(i, (a, b))| i == axis || a == b),
                    "concat shape mismatch: {s:?} vs {first:?} on axis {axis}"
                );
                s[axis]
            })
            .collect();
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &len) in values.iter().zip(&lens) {
                data.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first.clone();
        shape[axis] = total;
        self.custom(parts, Tensor::new(&shape, data), move |ctx| {
            let gd = ctx.grad.data();
            let mut grads: Vec<Vec<F>> = lens
                .iter()
                .map(|&l| Vec::with_capacity(outer * l * inner))
                .collect();
            for o in 0..outer {
                let mut off = o * total * inner;
                for (g, &len) in grads.iter_mut().zip(&lens) {
                    g.extend_from_slice(&gd[off..off + len * inner]);
                    off += len * inner;
                }
            }
            grads
                .into_iter()
                .zip(ctx.inputs)
                .zip(ctx.needs)
                .map(|((g, x), &need)| need.then(|| Tensor::new(x.shape(), g)))
                .collect()
        })
    }
}

pub(crate) fn permute_tensor<F: Real>(x: &Tensor<F>, perm: &[usize]) -> Tensor<F> {
    assert_eq!(perm.len(), x.rank(), "permutation rank mismatch");
    let st = strides(x.shape());
    let out_shape: Vec<usize> = perm.iter().map(|&p| x.dim(p)).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| st[p]).collect();
    Tensor::new(&out_shape, strided_gather(x.data(), &src_strides, &out_shape))
}
