//! Parameterized layers on top of the autodiff engine.
//!
//! Layers own only [`ParamId`]s; the tensors live in a [`ParamStore`] and are
//! bound onto a graph through a [`Bind`] at forward time.

mod recurrent;

use rand::Rng;
use svc_autograd::{Conv1dSpec, Graph, ParamId, ParamStore, Real, Var};

pub use recurrent::{gru_sequence, lstm_sequence, BiGru, Gru, Lstm};

/// How a store's parameters enter a graph: as trainable leaves or as
/// constants that receive no gradient.
pub struct Bind<'s, F> {
    pub store: &'s ParamStore<F>,
    pub frozen: bool,
}

impl<F> Clone for Bind<'_, F> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<F> Copy for Bind<'_, F> {}

impl<'s, F: Real> Bind<'s, F> {
    pub fn trainable(store: &'s ParamStore<F>) -> Self {
        Self { store, frozen: false }
    }

    pub fn frozen(store: &'s ParamStore<F>) -> Self {
        Self { store, frozen: true }
    }

    pub fn var<'g>(&self, g: &'g Graph<F>, id: ParamId) -> Var<'g, F> {
        if self.frozen {
            g.constant(self.store.get(id).clone())
        } else {
            g.param(self.store, id)
        }
    }
}

/// Fully connected layer on the last axis; weight is `[in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, din: usize, dout: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (din as f64).sqrt();
        Self {
            w: store.uniform(format!("{name}.w"), &[din, dout], bound, rng),
            b: Some(store.uniform(format!("{name}.b"), &[dout], bound, rng)),
        }
    }

    pub fn no_bias<F: Real>(store: &mut ParamStore<F>, name: &str, din: usize, dout: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (din as f64).sqrt();
        Self {
            w: store.uniform(format!("{name}.w"), &[din, dout], bound, rng),
            b: None,
        }
    }

    pub fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, x: Var<'g, F>) -> Var<'g, F> {
        x.linear(p.var(g, self.w), self.b.map(|b| p.var(g, b)))
    }
}

/// 1-D convolution over `[batch, channels, time]`; weight is `[out, in, k]`.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
    pub spec: Conv1dSpec,
}

impl Conv1d {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        spec: Conv1dSpec,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / ((cin * kernel) as f64).sqrt();
        Self {
            w: store.uniform(format!("{name}.w"), &[cout, cin, kernel], bound, rng),
            b: store.uniform(format!("{name}.b"), &[cout], bound, rng),
            kernel,
            spec,
        }
    }

    /// Length-preserving convolution.
    pub fn same<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self::new(store, name, cin, cout, kernel, Conv1dSpec::same(kernel, dilation), rng)
    }

    pub fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, x: Var<'g, F>) -> Var<'g, F> {
        x.conv1d(p.var(g, self.w), Some(p.var(g, self.b)), self.spec)
    }
}

/// Transposed 1-D convolution; weight is `[in, out, k]`.
#[derive(Clone, Debug)]
pub struct ConvTranspose1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTranspose1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / ((cout * kernel) as f64).sqrt();
        Self {
            w: store.uniform(format!("{name}.w"), &[cin, cout, kernel], bound, rng),
            b: store.uniform(format!("{name}.b"), &[cout], bound, rng),
            stride,
            pad,
        }
    }

    pub fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, x: Var<'g, F>) -> Var<'g, F> {
        x.conv_transpose1d(p.var(g, self.w), Some(p.var(g, self.b)), self.stride, self.pad)
    }
}

/// Lookup table of `rows` learned vectors.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
}

impl Embedding {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, rows: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            table: store.uniform(format!("{name}.table"), &[rows, dim], 1.0 / (dim as f64).sqrt(), rng),
        }
    }

    /// `[indices.len(), dim]`.
    pub fn forward<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, indices: &[usize]) -> Var<'g, F> {
        p.var(g, self.table).index_select(indices)
    }
}
