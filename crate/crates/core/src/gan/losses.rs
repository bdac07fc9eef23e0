use std::sync::Arc;

use svc_autograd::{Real, Var};

use super::DiscOutput;
use crate::error::{Result, SvcError};
use crate::features::MelAnalyzer;

/// Mean absolute difference between the log-mel spectrograms of two batches
/// of waves `[B, N]`.
pub fn mel_l1<'g, F: Real + rustfft::FftNum>(
    analyzer: &Arc<MelAnalyzer<F>>,
    real: Var<'g, F>,
    fake: Var<'g, F>,
) -> Result<Var<'g, F>> {
    if real.shape() != fake.shape() {
        return Err(SvcError::InvalidInput(format!(
            "mel loss inputs differ in shape: {:?} vs {:?}",
            real.shape(),
            fake.shape()
        )));
    }
    Ok((analyzer.log_mel(real) - analyzer.log_mel(fake)).abs().mean())
}

/// Sum over discriminators and layers of the mean absolute difference
/// between real and generated activations.
pub fn feature_matching_loss<'g, F: Real>(real: &[DiscOutput<'g, F>], fake: &[DiscOutput<'g, F>]) -> Result<Var<'g, F>> {
    if real.len() != fake.len() || real.iter().zip(fake).any(|(r, f)| r.features.len() != f.features.len()) {
        return Err(SvcError::InvalidInput("feature matching over mismatched discriminator outputs".into()));
    }
    let mut total: Option<Var<'g, F>> = None;
    for (r, f) in real.iter().zip(fake) {
        for (&rf, &ff) in r.features.iter().zip(&f.features) {
            if rf.shape() != ff.shape() {
                return Err(SvcError::InvalidInput(format!(
                    "feature map shapes differ: {:?} vs {:?}",
                    rf.shape(),
                    ff.shape()
                )));
            }
            let term = (rf - ff).abs().mean();
            total = Some(total.map_or(term, |acc| acc + term));
        }
    }
    total.ok_or_else(|| SvcError::InvalidInput("feature matching needs at least one layer".into()))
}

/// Least-squares discriminator loss `mean((real - 1)^2) + mean(fake^2)`.
pub fn lsgan_d<'g, F: Real>(real: Var<'g, F>, fake: Var<'g, F>) -> Var<'g, F> {
    real.add_scalar(-1.0).square().mean() + fake.square().mean()
}

/// Least-squares generator loss `mean((fake - 1)^2)`.
pub fn lsgan_g<F: Real>(fake: Var<'_, F>) -> Var<'_, F> {
    fake.add_scalar(-1.0).square().mean()
}
