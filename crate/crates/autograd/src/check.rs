//! Finite-difference gradient checking.
//!
//! These helpers only ever evaluate the forward function, so they stay
//! independent of the backward code they are used to validate.

use crate::{Real, Tensor};

/// Central-difference gradient of scalar `f` with respect to every element of
/// every input.
pub fn numeric_gradients<F: Real>(f: impl Fn(&[Tensor<F>]) -> F, inputs: &[Tensor<F>], eps: f64) -> Vec<Tensor<F>> {
    let mut work: Vec<Tensor<F>> = inputs.to_vec();
    let h = F::c(eps);
    let two_h = F::c(2.0 * eps);
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[i].shape());
        for j in 0..inputs[i].numel() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = f(&work);
            work[i].data_mut()[j] = orig - h;
            let minus = f(&work);
            work[i].data_mut()[j] = orig;
            g.data_mut()[j] = (plus - minus) / two_h;
        }
        out.push(g);
    }
    out
}

/// Largest elementwise `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error<F: Real>(a: &Tensor<F>, b: &Tensor<F>, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape(), "relative error shape mismatch");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let (x, y) = (x.as_f64(), y.as_f64());
            (x - y).abs() / x.abs().max(y.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}
