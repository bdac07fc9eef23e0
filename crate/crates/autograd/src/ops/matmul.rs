use crate::{Real, Tensor, Var};

/// `a @ b` for row-major matrices.
pub fn matmul_tensor<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    assert!(
        a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
        "matmul shape mismatch: {:?} @ {:?}",
        a.shape(),
        b.shape()
    );
    let (m, k, n) = (a.dim(0), a.dim(1), b.dim(1));
    let mut out = Tensor::zeros(&[m, n]);
    F::gemm(
        m,
        k,
        n,
        F::one(),
        a.data(),
        (k as isize, 1),
        b.data(),
        (n as isize, 1),
        F::zero(),
        out.data_mut(),
        (n as isize, 1),
    );
    out
}

impl<'g, F: Real> Var<'g, F> {
    /// Matrix product of two rank-2 variables.
    pub fn matmul(self, rhs: Var<'g, F>) -> Var<'g, F> {
        let value = matmul_tensor(&self.value(), &rhs.value());
        self.graph().custom(&[self, rhs], value, |ctx| {
            let (a, b, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad);
            let (m, k, n) = (a.dim(0), a.dim(1), b.dim(1));
            let ga = ctx.needs[0].then(|| {
                // g [m, n] @ b^T [n, k]
                let mut ga = Tensor::zeros(&[m, k]);
                F::gemm(
                    m,
                    n,
                    k,
                    F::one(),
                    g.data(),
                    (n as isize, 1),
                    b.data(),
                    (1, n as isize),
                    F::zero(),
                    ga.data_mut(),
                    (k as isize, 1),
                );
                ga
            });
            let gb = ctx.needs[1].then(|| {
                // a^T [k, m] @ g [m, n]
                let mut gb = Tensor::zeros(&[k, n]);
                F::gemm(
                    k,
                    m,
                    n,
                    F::one(),
                    a.data(),
                    (1, k as isize),
                    g.data(),
                    (n as isize, 1),
                    F::zero(),
                    gb.data_mut(),
                    (n as isize, 1),
                );
                gb
            });
            vec![ga, gb]
        })
    }

    /// Applies `x @ w + b` over the last axis of any-rank `x`.
    pub fn linear(self, w: Var<'g, F>, b: Option<Var<'g, F>>) -> Var<'g, F> {
        let shape = self.shape();
        let din = *shape.last().expect("linear on a scalar");
        let rows = shape.iter().product::<usize>() / din.max(1);
        let dout = w.dim(1);
        let mut y = self.reshape(&[rows, din]).matmul(w);
        if let Some(b) = b {
            y = y + b;
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = dout;
        y.reshape(&out_shape)
    }
}
