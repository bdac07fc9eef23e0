//! Layered run configuration.
//!
//! Values are resolved in order: profile defaults, then an optional TOML
//! file, then `section.key=value` overrides, then an explicit seed. Unknown
//! keys and type errors are reported with the full key path.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvcError};
use crate::features::{ContentKind, PitchConfig, HOP};

/// Named default sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Small widths and short runs for a single CPU.
    Desk,
    /// Full-size widths and the long schedule.
    Paper,
}

impl FromStr for Profile {
    type Err = SvcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(SvcError::Config {
                key: "profile".into(),
                reason: format!("unknown profile `{other}`; expected `desk` or `paper`"),
            }),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Feature consumed by the content encoder.
    pub content: ContentKind,
    /// Feature consumed by the reference encoder.
    pub reference: ContentKind,
    /// Number of codebook centers for pseudo posteriorgrams.
    pub codebook_size: usize,
    pub pitch: PitchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbhgConfig {
    /// Convolution bank kernel sizes run from 1 to this value.
    pub bank_size: usize,
    pub channels: usize,
    pub highway_layers: usize,
    /// Width of each direction of the recurrent layer.
    pub gru_hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub initial_channels: usize,
    /// Product must equal the hop size (240).
    pub upsample_rates: Vec<usize>,
    pub resblock_kernels: Vec<usize>,
    pub resblock_dilations: Vec<Vec<usize>>,
    /// Number of harmonics in the sine excitation fed to every level.
    pub harmonics: usize,
    pub source_amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub periods: Vec<usize>,
    pub period_channels: Vec<usize>,
    pub scales: usize,
    pub scale_channels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub content_encoder_dim: usize,
    pub reference_encoder_dim: usize,
    pub singer_dim: usize,
    pub cbhg: CbhgConfig,
    pub decoder: DecoderConfig,
    pub discriminator: DiscriminatorConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfusionConfig {
    /// Singer confusion weight.
    pub lambda: f64,
    /// Pitch confusion weight.
    pub omega: f64,
    pub channels: usize,
    pub kernel: usize,
    pub layers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpcConfig {
    /// Number of future steps predicted.
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    pub n_neg: usize,
    pub beta: f64,
    pub context_dim: usize,
    pub context_kernel: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub lambda_mel: f64,
    pub lambda_fm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    /// Training crop length in frames.
    pub segment_frames: usize,
    /// Multiplicative decay applied every `lr_decay_every` steps.
    pub lr_decay: f64,
    pub lr_decay_every: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub checkpoint_interval: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Compare log F0 instead of Hz in the pitch correlation.
    pub ncc_log_f0: bool,
    pub embedder_hidden: usize,
    pub embedder_dim: usize,
    pub embedder_steps: usize,
    pub embedder_learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub features: FeatureConfig,
    pub model: ModelConfig,
    pub confusion: ConfusionConfig,
    pub cpc: CpcConfig,
    pub gan: GanConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let desk = profile == Profile::Desk;
        let pick = |d: usize, p: usize| if desk { d } else { p };
        RunConfig {
            profile,
            seed: 0,
            features: FeatureConfig {
                content: ContentKind::PseudoPpg,
                reference: ContentKind::ExternalMel,
                codebook_size: pick(32, 64),
                pitch: PitchConfig::default(),
            },
            model: ModelConfig {
                content_encoder_dim: pick(64, 256),
                reference_encoder_dim: pick(32, 128),
                singer_dim: pick(32, 128),
                cbhg: CbhgConfig {
                    bank_size: pick(4, 8),
                    channels: pick(32, 128),
                    highway_layers: 4,
                    gru_hidden: pick(32, 128),
                },
                decoder: DecoderConfig {
                    initial_channels: pick(64, 256),
                    upsample_rates: vec![8, 6, 5],
                    resblock_kernels: if desk { vec![3] } else { vec![3, 7, 11] },
                    resblock_dilations: if desk {
                        vec![vec![1, 3]]
                    } else {
                        vec![vec![1, 3, 5]; 3]
                    },
                    harmonics: 8,
                    source_amplitude: 0.1,
                },
                discriminator: DiscriminatorConfig {
                    periods: vec![2, 3, 5],
                    period_channels: if desk { vec![4, 8, 16, 16] } else { vec![8, 32, 128, 256] },
                    scales: 2,
                    scale_channels: if desk { vec![8, 16, 16, 16] } else { vec![32, 64, 256, 256] },
                },
            },
            confusion: ConfusionConfig {
                lambda: 0.1,
                omega: 0.1,
                channels: pick(32, 128),
                kernel: 5,
                layers: 4,
            },
            cpc: CpcConfig {
                k: 12,
                n_neg: 10,
                beta: 0.1,
                context_dim: pick(32, 128),
                context_kernel: 3,
            },
            gan: GanConfig {
                lambda_mel: 45.0,
                lambda_fm: 2.0,
            },
            train: TrainConfig {
                learning_rate: 4e-4,
                batch_size: pick(4, 16),
                max_steps: if desk { 5000 } else { 400_000 },
                segment_frames: 100,
                lr_decay: 0.999,
                lr_decay_every: 1000,
                adam_beta1: 0.9,
                adam_beta2: 0.999,
                adam_eps: 1e-8,
                checkpoint_interval: if desk { 500 } else { 10_000 },
            },
            eval: EvalConfig {
                ncc_log_f0: false,
                embedder_hidden: 64,
                embedder_dim: 32,
                embedder_steps: 300,
                embedder_learning_rate: 3e-3,
            },
        }
    }

    /// Resolves a configuration from its layers and validates it.
    pub fn load(profile: Profile, file: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut table = to_table(&RunConfig::profile(profile))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(SvcError::io(format!("reading {}", path.display())))?;
            let layer: toml::Table = toml::from_str(&text).map_err(|e| SvcError::Config {
                key: path.display().to_string(),
                reason: e.to_string(),
            })?;
            if let Some(toml::Value::String(p)) = layer.get("profile") {
                let from_file: Profile = p.parse()?;
                if from_file != profile {
                    table = to_table(&RunConfig::profile(from_file))?;
                }
            }
            merge(&mut table, layer);
        }
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        if let Some(seed) = seed {
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        let config = from_table(table)?;
        config.validate()?;
        Ok(config)
    }

    /// This configuration with `dotted.key=value` overrides applied,
    /// validated.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut table = to_table(self)?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config = from_table(table)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(SvcError::Config {
                key: key.into(),
                reason: reason.into(),
            })
        };
        let rates = &self.model.decoder.upsample_rates;
        if rates.is_empty() || rates.iter().product::<usize>() != HOP {
            return bad(
                "model.decoder.upsample_rates",
                &format!("product of {rates:?} must equal the hop size {HOP}"),
            );
        }
        if rates.contains(&0) {
            return bad("model.decoder.upsample_rates", "rates must be positive");
        }
        if self.model.decoder.resblock_kernels.len() != self.model.decoder.resblock_dilations.len() {
            return bad(
                "model.decoder.resblock_dilations",
                "needs one dilation list per resblock kernel",
            );
        }
        for (key, v) in [
            ("confusion.lambda", self.confusion.lambda),
            ("confusion.omega", self.confusion.omega),
            ("cpc.beta", self.cpc.beta),
            ("gan.lambda_mel", self.gan.lambda_mel),
            ("gan.lambda_fm", self.gan.lambda_fm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(key, "must be a finite non-negative number");
            }
        }
        for (key, v) in [
            ("train.learning_rate", self.train.learning_rate),
            ("train.lr_decay", self.train.lr_decay),
            ("train.adam_eps", self.train.adam_eps),
            ("eval.embedder_learning_rate", self.eval.embedder_learning_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, "must be a finite positive number");
            }
        }
        for (key, v) in [
            ("cpc.K", self.cpc.k),
            ("train.batch_size", self.train.batch_size),
            ("train.segment_frames", self.train.segment_frames),
            ("features.codebook_size", self.features.codebook_size),
            ("model.cbhg.bank_size", self.model.cbhg.bank_size),
            ("model.cbhg.channels", self.model.cbhg.channels),
            ("model.cbhg.gru_hidden", self.model.cbhg.gru_hidden),
            ("model.content_encoder_dim", self.model.content_encoder_dim),
            ("model.reference_encoder_dim", self.model.reference_encoder_dim),
            ("model.singer_dim", self.model.singer_dim),
            ("model.decoder.initial_channels", self.model.decoder.initial_channels),
            ("confusion.channels", self.confusion.channels),
            ("confusion.kernel", self.confusion.kernel),
            ("cpc.context_dim", self.cpc.context_dim),
            ("cpc.context_kernel", self.cpc.context_kernel),
            ("model.discriminator.scales", self.model.discriminator.scales),
        ] {
            if v == 0 {
                return bad(key, "must be at least 1");
            }
        }
        if self.train.lr_decay_every == 0 {
            return bad("train.lr_decay_every", "must be at least 1");
        }
        let c0 = self.model.decoder.initial_channels;
        if c0 >> rates.len() == 0 {
            return bad(
                "model.decoder.initial_channels",
                "too small to halve once per upsampling level",
            );
        }
        if self.model.discriminator.period_channels.is_empty() || self.model.discriminator.scale_channels.is_empty() {
            return bad("model.discriminator", "channel lists must be non-empty");
        }
        if !(0.0..=1.0).contains(&self.train.adam_beta1) || !(0.0..1.0).contains(&self.train.adam_beta2) {
            return bad("train.adam_beta1", "Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}

fn to_table(config: &RunConfig) -> Result<toml::Table> {
    toml::Table::try_from(config).map_err(|e| SvcError::Config {
        key: "<defaults>".into(),
        reason: e.to_string(),
    })
}

fn from_table(table: toml::Table) -> Result<RunConfig> {
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| SvcError::Config {
        key: e.path().to_string(),
        reason: e.inner().to_string(),
    })
}

/// Recursively overlays `layer` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut toml::Table, layer: toml::Table) {
    for (k, v) in layer {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(l)) => merge(b, l),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies one `dotted.key=value` override. The value is parsed as a TOML
/// literal and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item.split_once('=').ok_or_else(|| SvcError::Config {
        key: item.into(),
        reason: "override must look like section.key=value".into(),
    })?;
    let key = key.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cursor = table;
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            cursor.insert((*part).to_string(), value);
            return Ok(());
        }
        let next = cursor
            .entry((*part).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = match next {
            toml::Value::Table(t) => t,
            _ => {
                return Err(SvcError::Config {
                    key: key.into(),
                    reason: format!("`{}` is not a section", parts[..=i].join(".")),
                })
            }
        };
    }
    Ok(())
}
