use crate::{Real, Tensor, Var};

/// Splits `shape` around `axis` into `(outer, n, inner)`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    assert!(axis < shape.len(), "axis {axis} out of range for {shape:?}");
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'g, F: Real> Var<'g, F> {
    pub fn sum(self) -> Var<'g, F> {
        let value = Tensor::scalar(self.value().sum());
        self.graph().custom(&[self], value, |ctx| {
            let g = ctx.grad.item();
            vec![Some(Tensor::full(ctx.inputs[0].shape(), g))]
        })
    }

    pub fn mean(self) -> Var<'g, F> {
        let n = self.value().numel().max(1);
        self.sum().scale(1.0 / n as f64)
    }

    /// Sum over one axis. With `keepdim` the axis stays with length 1.
    pub fn sum_axis(self, axis: usize, keepdim: bool) -> Var<'g, F> {
        let x = self.value();
        let (outer, n, inner) = split_axis(x.shape(), axis);
        let xd = x.data();
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..n {
                let src = &xd[(o * n + i) * inner..(o * n + i + 1) * inner];
                for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += v;
                }
            }
        }
        let mut shape = x.shape().to_vec();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        let in_shape = x.shape().to_vec();
        self.graph()
            .custom(&[self], Tensor::new(&shape, out), move |ctx| {
                let g = ctx.grad.data();
                let mut gx = Vec::with_capacity(outer * n * inner);
                for o in 0..outer {
                    for _ in 0..n {
                        gx.extend_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(Tensor::new(&in_shape, gx))]
            })
    }

    pub fn mean_axis(self, axis: usize, keepdim: bool) -> Var<'g, F> {
        let n = self.dim(axis).max(1);
        self.sum_axis(axis, keepdim).scale(1.0 / n as f64)
    }
}
