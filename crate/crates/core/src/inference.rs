//! Conversion with a trained model.
//!
//! Only the two encoders, the singer table and the decoder run here. The
//! confusion heads, the CPC module and the discriminators are never touched.

use std::path::Path;

use svc_autograd::{Graph, ParamStore, Tensor};

use crate::checkpoint::Container;
use crate::config::RunConfig;
use crate::dataset::{analyze_clip, derived_feature};
use crate::error::{Result, SvcError};
use crate::features::{AudioClip, FrameMatrix, PitchTrack};
use crate::model::{ModelMeta, SvcModel};
use crate::nn::Bind;
use crate::trainer::{fill_store, TrainState};

/// Frame-aligned decoder inputs for one source clip.
#[derive(Clone, Debug, PartialEq)]
pub struct ConversionInput {
    pub content: FrameMatrix,
    pub reference: FrameMatrix,
    pub pitch: PitchTrack,
}

impl ConversionInput {
    pub fn frames(&self) -> usize {
        self.pitch.len()
    }
}

/// A trained generator ready for conversion.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    pub config: RunConfig,
    pub meta: ModelMeta,
    pub model: SvcModel,
    pub params: ParamStore<f32>,
    /// Training steps behind these weights.
    pub step: u64,
}

impl Synthesizer {
    pub fn from_container(c: &Container) -> Result<Self> {
        c.info.config.validate()?;
        let mut params = ParamStore::new();
        let model = SvcModel::build(&c.info.config, &c.info.meta.dims, &mut params, c.info.config.seed);
        fill_store(&mut params, c, "generator")?;
        Ok(Self {
            config: c.info.config.clone(),
            meta: c.info.meta.clone(),
            model,
            params,
            step: c.info.step,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }

    pub fn from_state(state: &TrainState) -> Self {
        Self {
            config: state.config.clone(),
            meta: state.meta.clone(),
            model: state.model.clone(),
            params: state.generator.clone(),
            step: state.step,
        }
    }

    /// Analyzes a source clip into decoder inputs. Only works when both
    /// encoder feature kinds are computable from audio.
    pub fn prepare(&self, clip: &AudioClip) -> Result<ConversionInput> {
        let analysis = analyze_clip(clip, &self.config);
        let feature = |kind| {
            derived_feature(kind, &analysis.mel, self.meta.codebook.as_ref())?.ok_or_else(|| {
                SvcError::MissingFeatures(format!("{kind} features cannot be computed from audio; supply an SVCF file"))
            })
        };
        Ok(ConversionInput {
            content: feature(self.config.features.content)?,
            reference: feature(self.config.features.reference)?,
            pitch: analysis.pitch,
        })
    }

    /// Renders the input with singer `target`'s embedding; the output has
    /// `240 * frames` samples.
    pub fn render(&self, input: &ConversionInput, target: usize) -> Result<AudioClip> {
        let t = input.frames();
        if input.content.frames() != t || input.reference.frames() != t {
            return Err(SvcError::InvalidInput(format!(
                "content ({}), reference ({}) and pitch ({t}) frame counts differ",
                input.content.frames(),
                input.reference.frames()
            )));
        }
        if t == 0 {
            return Err(SvcError::InvalidInput("source has no frames".into()));
        }
        let as_batch = |m: &FrameMatrix| Tensor::new(&[1, t, m.dim()], m.data().to_vec());
        let g = Graph::<f32>::inference();
        let p = Bind::frozen(&self.params);
        let enc = self
            .model
            .encode(&g, p, g.constant(as_batch(&input.content)), g.constant(as_batch(&input.reference)))?;
        let wave = self.model.decode(&g, p, enc.joint, &[target], std::slice::from_ref(&input.pitch))?;
        let samples = wave.value().data().to_vec();
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(SvcError::InvalidInput("decoder produced non-finite samples".into()));
        }
        AudioClip::from_clamped(samples)
    }

    /// Converts `clip` to the voice of singer `target`.
    pub fn convert(&self, clip: &AudioClip, target: &str) -> Result<AudioClip> {
        let index = self.meta.singer_index(target)?;
        self.render(&self.prepare(clip)?, index)
    }
}
