//! The conversion network: content and reference encoders, singer table,
//! waveform decoder, plus the train-only confusion heads and CPC module that
//! share its parameter store.

mod cbhg;
mod decoder;

use serde::{Deserialize, Serialize};
use svc_autograd::{Graph, ParamStore, Real, Tensor, Var};

pub use cbhg::Cbhg;
pub use decoder::{harmonic_source, pitch_features, Decoder};

use crate::config::RunConfig;
use crate::confusion::ConfusionHeads;
use crate::cpc::CpcModule;
use crate::error::{Result, SvcError};
use crate::confusion::PitchStats;
use crate::features::{Codebook, PitchTrack};
use crate::gan::DiscriminatorBank;
use crate::nn::{Bind, Embedding};
use crate::rng::{purpose, rng_for};

/// Parameter name prefixes of modules that only run during training.
pub const TRAIN_ONLY_PREFIXES: [&str; 2] = ["confusion.", "cpc."];

/// Input sizes that depend on the data rather than the configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub content_dim: usize,
    pub reference_dim: usize,
    pub num_singers: usize,
}

/// Data-derived state a trained model needs besides its weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub dims: ModelDims,
    /// Singer ids in index order.
    pub singers: Vec<String>,
    pub pitch_stats: PitchStats,
    /// Codebook for pseudo posteriorgram content, when that kind is used.
    pub codebook: Option<Codebook>,
}

impl ModelMeta {
    /// Index of a singer id, or an error listing the known ids.
    pub fn singer_index(&self, id: &str) -> Result<usize> {
        self.singers.iter().position(|s| s == id).ok_or_else(|| SvcError::UnknownSinger {
            requested: id.to_string(),
            known: self.singers.clone(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct SvcModel {
    pub dims: ModelDims,
    pub content_encoder: Cbhg,
    pub reference_encoder: Cbhg,
    pub singer_table: Embedding,
    pub decoder: Decoder,
    pub confusion: ConfusionHeads,
    pub cpc: CpcModule,
}

/// Outputs of both encoders and their concatenation.
pub struct Encoded<'g, F> {
    pub content: Var<'g, F>,
    pub reference: Var<'g, F>,
    /// `[B, T, D_content + D_reference]`.
    pub joint: Var<'g, F>,
}

impl SvcModel {
    /// Registers every generator-side parameter in `store`, initialized from
    /// `seed`.
    pub fn build<F: Real>(cfg: &RunConfig, dims: &ModelDims, store: &mut ParamStore<F>, seed: u64) -> Self {
        let m = &cfg.model;
        let mut rng = rng_for(&[seed, purpose::INIT, 0]);
        let content_encoder = Cbhg::new(store, "content_encoder", dims.content_dim, m.content_encoder_dim, &m.cbhg, &mut rng);
        let reference_encoder = Cbhg::new(store, "reference_encoder", dims.reference_dim, m.reference_encoder_dim, &m.cbhg, &mut rng);
        let singer_table = Embedding::new(store, "singer_table", dims.num_singers, m.singer_dim, &mut rng);
        let d_e = m.content_encoder_dim + m.reference_encoder_dim;
        let decoder = Decoder::new(store, "decoder", d_e + m.singer_dim, &m.decoder, &mut rng);
        let confusion = ConfusionHeads::new(store, "confusion", m.reference_encoder_dim, dims.num_singers, &cfg.confusion, &mut rng);
        let cpc = CpcModule::new(store, "cpc", d_e, &cfg.cpc, &mut rng);
        Self {
            dims: dims.clone(),
            content_encoder,
            reference_encoder,
            singer_table,
            decoder,
            confusion,
            cpc,
        }
    }

    /// Encodes `[B, T, D_c]` content and `[B, T, D_r]` reference features.
    pub fn encode<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, content: Var<'g, F>, reference: Var<'g, F>) -> Result<Encoded<'g, F>> {
        for (what, v, dim) in [
            ("content", content, self.dims.content_dim),
            ("reference", reference, self.dims.reference_dim),
        ] {
            if v.shape().len() != 3 || v.dim(2) != dim {
                return Err(SvcError::InvalidInput(format!(
                    "{what} features have shape {:?}, expected [batch, frames, {dim}]",
                    v.shape()
                )));
            }
            if !v.value().all_finite() {
                return Err(SvcError::InvalidInput(format!("{what} features contain non-finite values")));
            }
        }
        if content.dim(0) != reference.dim(0) || content.dim(1) != reference.dim(1) {
            return Err(SvcError::InvalidInput(format!(
                "content {:?} and reference {:?} features are not frame-aligned",
                content.shape(),
                reference.shape()
            )));
        }
        let c = self.content_encoder.forward(g, p, content);
        let r = self.reference_encoder.forward(g, p, reference);
        Ok(Encoded {
            content: c,
            reference: r,
            joint: g.concat(&[c, r], 2),
        })
    }

    /// Decodes `[B, T, D_e]` encoder frames for the given singers and pitch
    /// tracks into `[B, 240 * T]` samples.
    pub fn decode<'g, F: Real>(&self, g: &'g Graph<F>, p: Bind<'_, F>, joint: Var<'g, F>, singers: &[usize], pitch: &[PitchTrack]) -> Result<Var<'g, F>> {
        let (batch, frames) = (joint.dim(0), joint.dim(1));
        if singers.len() != batch || pitch.len() != batch {
            return Err(SvcError::InvalidInput(format!(
                "batch of {batch} needs as many singers and pitch tracks, got {} and {}",
                singers.len(),
                pitch.len()
            )));
        }
        if let Some(t) = pitch.iter().find(|t| t.len() != frames) {
            return Err(SvcError::InvalidInput(format!(
                "pitch track has {} frames but the encoder output has {frames}",
                t.len()
            )));
        }
        if let Some(&s) = singers.iter().find(|&&s| s >= self.dims.num_singers) {
            return Err(SvcError::InvalidInput(format!(
                "singer index {s} out of range for {} singers",
                self.dims.num_singers
            )));
        }
        let zeros = g.constant(Tensor::zeros(&[batch, frames, 1]));
        let emb = self.singer_table.forward(g, p, singers);
        let singer = emb.reshape(&[batch, 1, emb.dim(1)]) + zeros;
        let cond = g.concat(&[joint, singer], 2);
        Ok(self.decoder.forward(g, p, cond, pitch))
    }
}

/// Builds the discriminator bank in its own store.
pub fn build_discriminators<F: Real>(cfg: &RunConfig, store: &mut ParamStore<F>, seed: u64) -> DiscriminatorBank {
    let mut rng = rng_for(&[seed, purpose::INIT, 1]);
    DiscriminatorBank::new(store, "disc", &cfg.model.discriminator, &mut rng)
}
