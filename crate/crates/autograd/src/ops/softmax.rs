use crate::{Real, Tensor, Var};

/// Row-wise `log(sum(exp(row)))`, shifted by the row maximum.
pub fn logsumexp<F: Real>(row: &[F]) -> F {
    let m = row.iter().copied().fold(F::neg_infinity(), F::max);
    if m == F::neg_infinity() {
        return m;
    }
    let s: F = row.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

impl<'g, F: Real> Var<'g, F> {
    /// Log-softmax over the last axis.
    pub fn log_softmax(self) -> Var<'g, F> {
        let x = self.value();
        let n = *x.shape().last().expect("log_softmax on a scalar");
        let mut data = Vec::with_capacity(x.numel());
        for row in x.data().chunks(n) {
            let lse = logsumexp(row);
            data.extend(row.iter().map(|&v| v - lse));
        }
        self.graph()
            .custom(&[self], Tensor::new(x.shape(), data), move |ctx| {
                let y = ctx.output.data();
                let g = ctx.grad.data();
                let mut gx = Vec::with_capacity(g.len());
                for (gr, yr) in g.chunks(n).zip(y.chunks(n)) {
                    let total: F = gr.iter().copied().sum();
                    gx.extend(gr.iter().zip(yr).map(|(&g, &y)| g - y.exp() * total));
                }
                vec![Some(Tensor::new(ctx.grad.shape(), gx))]
            })
    }

    /// Mean negative log-likelihood of `labels` under row-wise log-softmax of
    /// `[rows, classes]` logits.
    pub fn cross_entropy(self, labels: &[usize]) -> Var<'g, F> {
        let shape = self.shape();
        assert_eq!(shape.len(), 2, "cross_entropy expects [rows, classes]");
        assert_eq!(shape[0], labels.len(), "one label per row");
        let classes = shape[1];
        let flat: Vec<usize> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                assert!(l < classes, "label {l} out of range for {classes} classes");
                i * classes + l
            })
            .collect();
        self.log_softmax().take(&flat).mean().neg()
    }
}
