//! Waveform discriminators and the reconstruction objective.

pub mod discriminators;
pub mod losses;

pub use discriminators::{DiscOutput, DiscriminatorBank};
pub use losses::{feature_matching_loss, lsgan_d, lsgan_g, mel_l1};
