use std::ops::{Add, Mul, Neg, Sub};

use crate::tensor::{numel, strides};
use crate::{Real, Tensor, Var};

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let r = a.len().max(b.len());
    (0..r)
        .map(|i| {
            let da = if i + a.len() >= r { a[i + a.len() - r] } else { 1 };
            let db = if i + b.len() >= r { b[i + b.len() - r] } else { 1 };
            match (da, db) {
                (x, y) if x == y => x,
                (1, y) => y,
                (x, 1) => x,
                _ => panic!("shapes {a:?} and {b:?} do not broadcast"),
            }
        })
        .collect()
}

/// Strides of `shape` viewed inside the broadcast shape `out`; broadcast axes
/// get stride 0.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let off = out.len() - shape.len();
    let st = strides(shape);
    (0..out.len())
        .map(|i| {
            if i < off || shape[i - off] == 1 {
                0
            } else {
                st[i - off]
            }
        })
        .collect()
}

/// Visits every element of `out` in row-major order, passing the matching
/// offsets into two operands described by strides `sa` and `sb`.
fn for_each_offset(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize)) {
    let r = out.len();
    if r == 0 {
        f(0, 0);
        return;
    }
    let inner = out[r - 1];
    if inner == 0 || numel(out) == 0 {
        return;
    }
    let outer = numel(out) / inner;
    let (ia, ib) = (sa[r - 1], sb[r - 1]);
    let mut idx = vec![0usize; r - 1];
    let (mut oa, mut ob) = (0usize, 0usize);
    for _ in 0..outer {
        for j in 0..inner {
            f(oa + j * ia, ob + j * ib);
        }
        for d in (0..r - 1).rev() {
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out[d] {
                break;
            }
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

pub(crate) fn broadcast_zip<F: Real>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let out = broadcast_shape(a.shape(), b.shape());
    let (ad, bd) = (a.data(), b.data());
    if b.numel() == 1 {
        let y = bd[0];
        if a.shape() == out.as_slice() {
            return a.map(|x| f(x, y));
        }
    }
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let mut data = Vec::with_capacity(numel(&out));
    for_each_offset(&out, &sa, &sb, |i, j| data.push(f(ad[i], bd[j])));
    Tensor::new(&out, data)
}

/// Sums `g` down to `shape`, undoing a broadcast.
pub(crate) fn sum_to_shape<F: Real>(g: &Tensor<F>, shape: &[usize]) -> Tensor<F> {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Tensor::zeros(shape);
    let st = broadcast_strides(shape, g.shape());
    let own = strides(g.shape());
    let gd = g.data();
    let od = out.data_mut();
    for_each_offset(g.shape(), &st, &own, |t, s| od[t] += gd[s]);
    out
}

/// Gathers `src` through arbitrary per-axis strides into a fresh tensor of
/// shape `out`.
pub(crate) fn strided_gather<F: Real>(src: &[F], src_strides: &[usize], out: &[usize]) -> Vec<F> {
    let zeros = vec![0; out.len()];
    let mut data = Vec::with_capacity(numel(out));
    for_each_offset(out, src_strides, &zeros, |i, _| data.push(src[i]));
    data
}

// Named methods back the operator impls below and read better in chains.
#[allow(clippy::should_implement_trait)]
impl<'g, F: Real> Var<'g, F> {
    fn binary(
        self,
        rhs: Var<'g, F>,
        f: impl Fn(F, F) -> F,
        backward: impl Fn(&Tensor<F>, &Tensor<F>, &Tensor<F>, &[bool]) -> (Option<Tensor<F>>, Option<Tensor<F>>)
            + 'static,
    ) -> Var<'g, F> {
        let value = broadcast_zip(&self.value(), &rhs.value(), f);
        self.graph().custom(&[self, rhs], value, move |ctx| {
            let (a, b) = (&ctx.inputs[0], &ctx.inputs[1]);
            let (ga, gb) = backward(ctx.grad, a, b, ctx.needs);
            vec![
                ga.map(|g| sum_to_shape(&g, a.shape())),
                gb.map(|g| sum_to_shape(&g, b.shape())),
            ]
        })
    }

    pub fn add(self, rhs: Var<'g, F>) -> Var<'g, F> {
        self.binary(rhs, |a, b| a + b, |g, _, _, _| (Some(g.clone()), Some(g.clone())))
    }

    pub fn sub(self, rhs: Var<'g, F>) -> Var<'g, F> {
        self.binary(
            rhs,
            |a, b| a - b,
            |g, _, _, _| (Some(g.clone()), Some(g.map(|x| -x))),
        )
    }

    pub fn mul(self, rhs: Var<'g, F>) -> Var<'g, F> {
        self.binary(
            rhs,
            |a, b| a * b,
            |g, a, b, needs| {
                (
                    needs[0].then(|| broadcast_zip(g, b, |g, b| g * b)),
                    needs[1].then(|| broadcast_zip(g, a, |g, a| g * a)),
                )
            },
        )
    }

    pub fn div(self, rhs: Var<'g, F>) -> Var<'g, F> {
        self.binary(
            rhs,
            |a, b| a / b,
            |g, a, b, needs| {
                let ga = needs[0].then(|| broadcast_zip(g, b, |g, b| g / b));
                let gb = needs[1].then(|| {
                    let q = broadcast_zip(a, b, |a, b| -a / (b * b));
                    broadcast_zip(g, &q, |g, q| g * q)
                });
                (ga, gb)
            },
        )
    }

    /// Elementwise map with derivative `df(x, y)` where `y = f(x)`.
    fn unary(self, f: impl Fn(F) -> F, df: impl Fn(F, F) -> F + 'static) -> Var<'g, F> {
        let value = self.value().map(f);
        self.graph().custom(&[self], value, move |ctx| {
            let x = ctx.inputs[0].data();
            let y = ctx.output.data();
            let data = ctx
                .grad
                .data()
                .iter()
                .zip(x.iter().zip(y))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(Tensor::new(ctx.grad.shape(), data))]
        })
    }

    pub fn neg(self) -> Var<'g, F> {
        self.scale(-1.0)
    }

    pub fn scale(self, s: f64) -> Var<'g, F> {
        let s = F::c(s);
        self.unary(move |x| x * s, move |_, _| s)
    }

    pub fn add_scalar(self, s: f64) -> Var<'g, F> {
        let s = F::c(s);
        self.unary(move |x| x + s, |_, _| F::one())
    }

    pub fn exp(self) -> Var<'g, F> {
        self.unary(F::exp, |_, y| y)
    }

    pub fn ln(self) -> Var<'g, F> {
        self.unary(F::ln, |x, _| x.recip())
    }

    pub fn tanh(self) -> Var<'g, F> {
        self.unary(F::tanh, |_, y| F::one() - y * y)
    }

    pub fn sigmoid(self) -> Var<'g, F> {
        self.unary(sigmoid, |_, y| y * (F::one() - y))
    }

    pub fn relu(self) -> Var<'g, F> {
        self.unary(
            |x| x.max(F::zero()),
            |x, _| if x > F::zero() { F::one() } else { F::zero() },
        )
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g, F> {
        let s = F::c(slope);
        self.unary(
            move |x| if x > F::zero() { x } else { x * s },
            move |x, _| if x > F::zero() { F::one() } else { s },
        )
    }

    pub fn abs(self) -> Var<'g, F> {
        self.unary(F::abs, |x, _| {
            if x > F::zero() {
                F::one()
            } else if x < F::zero() {
                -F::one()
            } else {
                F::zero()
            }
        })
    }

    pub fn square(self) -> Var<'g, F> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    /// `max(x, floor)`; no gradient flows where the floor is active.
    pub fn clamp_min(self, floor: f64) -> Var<'g, F> {
        let floor = F::c(floor);
        self.unary(
            move |x| x.max(floor),
            move |x, _| if x >= floor { F::one() } else { F::zero() },
        )
    }

    /// Identity on the forward pass; multiplies the gradient by `-scale` on
    /// the way back.
    pub fn grad_reverse(self, scale: f64) -> Var<'g, F> {
        assert!(scale >= 0.0, "reversal scale must be non-negative");
        let s = F::c(-scale);
        self.unary(|x| x, move |_, _| s)
    }
}

#[inline]
pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

impl<'g, F: Real> Add for Var<'g, F> {
    type Output = Var<'g, F>;
    fn add(self, rhs: Self) -> Self::Output {
        Var::add(self, rhs)
    }
}

impl<'g, F: Real> Sub for Var<'g, F> {
    type Output = Var<'g, F>;
    fn sub(self, rhs: Self) -> Self::Output {
        Var::sub(self, rhs)
    }
}

impl<'g, F: Real> Mul for Var<'g, F> {
    type Output = Var<'g, F>;
    fn mul(self, rhs: Self) -> Self::Output {
        Var::mul(self, rhs)
    }
}

impl<'g, F: Real> Neg for Var<'g, F> {
    type Output = Var<'g, F>;
    fn neg(self) -> Self::Output {
        Var::neg(self)
    }
}
