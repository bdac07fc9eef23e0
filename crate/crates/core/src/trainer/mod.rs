//! Adversarial training loop, checkpointing and resumption.
//!
//! Each step first updates the discriminators on the least-squares loss with
//! the generator output held fixed, then runs one backward pass for the
//! generator side. That pass minimizes
//! `L_hifi + L_s + L_f + L_CPC`: the confusion heads learn to classify and
//! predict pitch, while the reversal boundary in front of them hands the
//! reference encoder `-lambda * dL_s` and `-omega * dL_f`, which is the
//! gradient of the reported `L_G = L_hifi + L_confusion + L_CPC` with respect
//! to the encoder.

mod data;

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use svc_autograd::{Adam, AdamConfig, Graph, ParamStore, Real, Tensor, Var};

pub use data::{sample_batch, Batch, TrainingItem};

use crate::checkpoint::{software_version, CheckpointInfo, Container, NamedTensor};
use crate::config::RunConfig;
use crate::confusion::confusion_loss;
use crate::error::{Result, SvcError};
use crate::features::MelAnalyzer;
use crate::gan::{feature_matching_loss, lsgan_d, lsgan_g, mel_l1, DiscriminatorBank};
use crate::model::{build_discriminators, ModelMeta, SvcModel};
use crate::nn::Bind;

/// Named losses of one training step. `L_CPC` is the per-term mean scaled
/// by beta (the training objective); `L_CPC_raw` is the scaled sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub learning_rate: f64,
    #[serde(rename = "L_mel")]
    pub l_mel: f64,
    #[serde(rename = "L_fm")]
    pub l_fm: f64,
    #[serde(rename = "L_adv_g")]
    pub l_adv_g: f64,
    #[serde(rename = "L_adv_d")]
    pub l_adv_d: f64,
    #[serde(rename = "L_hifi")]
    pub l_hifi: f64,
    #[serde(rename = "L_s")]
    pub l_s: f64,
    #[serde(rename = "L_f")]
    pub l_f: f64,
    #[serde(rename = "L_confusion")]
    pub l_confusion: f64,
    #[serde(rename = "L_CPC")]
    pub l_cpc: f64,
    #[serde(rename = "L_CPC_raw")]
    pub l_cpc_raw: f64,
    #[serde(rename = "L_G")]
    pub l_g: f64,
    pub flags: Vec<String>,
}

pub const FLAG_NO_VOICED: &str = "no_voiced_frames";
pub const FLAG_CPC_DEGENERATE: &str = "cpc_degenerate";

/// Everything a training run mutates, plus the fixed pieces needed to rebuild
/// it from a checkpoint.
pub struct TrainState {
    pub config: RunConfig,
    pub meta: ModelMeta,
    pub model: SvcModel,
    pub discriminators: DiscriminatorBank,
    pub generator: ParamStore<f32>,
    pub discriminator: ParamStore<f32>,
    generator_opt: Adam<f32>,
    discriminator_opt: Adam<f32>,
    /// Completed steps.
    pub step: u64,
    analyzer: Arc<MelAnalyzer<f32>>,
}

fn check(component: &'static str, value: f64, step: u64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SvcError::NonFiniteLoss { component, step })
    }
}

fn sum_vars<'g, F: Real>(vars: impl IntoIterator<Item = Var<'g, F>>) -> Option<Var<'g, F>> {
    vars.into_iter().reduce(|a, b| a + b)
}

impl TrainState {
    /// Freshly initialized models and optimizers.
    pub fn new(config: RunConfig, meta: ModelMeta) -> Result<Self> {
        config.validate()?;
        if meta.dims.num_singers == 0 {
            return Err(SvcError::InvalidInput("at least one singer is required".into()));
        }
        let mut generator = ParamStore::new();
        let model = SvcModel::build(&config, &meta.dims, &mut generator, config.seed);
        let mut discriminator = ParamStore::new();
        let discriminators = build_discriminators(&config, &mut discriminator, config.seed);
        let adam = adam_config(&config);
        Ok(Self {
            generator_opt: Adam::new(&generator, adam),
            discriminator_opt: Adam::new(&discriminator, adam),
            config,
            meta,
            model,
            discriminators,
            generator,
            discriminator,
            step: 0,
            analyzer: Arc::new(MelAnalyzer::new()),
        })
    }

    pub fn analyzer(&self) -> &Arc<MelAnalyzer<f32>> {
        &self.analyzer
    }

    /// Rate for the next step: the base rate decayed by `lr_decay` once per
    /// `lr_decay_every` completed steps.
    pub fn learning_rate(&self) -> f64 {
        let t = &self.config.train;
        t.learning_rate * t.lr_decay.powi((self.step / t.lr_decay_every.max(1)) as i32)
    }

    /// One discriminator update followed by one generator-side update.
    pub fn train_step(&mut self, batch: &Batch) -> Result<LossReport> {
        let step = self.step;
        let lr = self.learning_rate();
        let cfg = &self.config;
        let g = Graph::<f32>::new();
        let gp = Bind::trainable(&self.generator);
        let enc = self
            .model
            .encode(&g, gp, g.constant(batch.content.clone()), g.constant(batch.reference.clone()))?;
        let fake = self.model.decode(&g, gp, enc.joint, &batch.singers, &batch.pitch)?;
        let real = g.constant(batch.wave.clone());

        let l_adv_d = {
            let gd = Graph::<f32>::new();
            let both = gd.constant(stack_batch(&batch.wave, &fake.value()));
            let outs = self.discriminators.forward(&gd, Bind::trainable(&self.discriminator), both);
            let loss = sum_vars(outs.iter().map(|o| {
                let (r, f) = o.split();
                lsgan_d(r.score, f.score)
            }))
            .ok_or_else(|| SvcError::InvalidInput("discriminator bank is empty".into()))?;
            let value = check("L_adv_d", loss.item().as_f64(), step)?;
            let grads = gd.backward(loss).for_store(&self.discriminator);
            self.discriminator_opt.step(&mut self.discriminator, &grads, lr);
            value
        };

        let outs = self
            .discriminators
            .forward(&g, Bind::frozen(&self.discriminator), g.concat(&[real, fake], 0));
        let (reals, fakes): (Vec<_>, Vec<_>) = outs.iter().map(|o| o.split()).unzip();
        let l_mel = mel_l1(&self.analyzer, real, fake)?;
        let l_fm = feature_matching_loss(&reals, &fakes)?;
        let l_adv_g = sum_vars(fakes.iter().map(|f| lsgan_g(f.score))).expect("non-empty bank");
        let conf = self.model.confusion.forward(
            &g,
            gp,
            enc.reference,
            &batch.singers,
            &batch.pitch,
            &self.meta.pitch_stats,
            cfg.confusion.lambda,
            cfg.confusion.omega,
        )?;
        let cpc = self.model.cpc.loss(&g, gp, enc.joint, cfg.cpc.n_neg, cfg.cpc.beta, &batch.cpc_seeds);

        let v_mel = check("L_mel", l_mel.item().as_f64(), step)?;
        let v_fm = check("L_fm", l_fm.item().as_f64(), step)?;
        let v_adv_g = check("L_adv_g", l_adv_g.item().as_f64(), step)?;
        let v_s = check("L_s", conf.l_s.item().as_f64(), step)?;
        let v_f = check("L_f", conf.l_f.item().as_f64(), step)?;
        let v_cpc = check("L_CPC", cpc.mean.item().as_f64(), step)?;
        let v_cpc_raw = check("L_CPC", cpc.raw.item().as_f64(), step)?;

        let objective = l_mel.scale(cfg.gan.lambda_mel) + l_fm.scale(cfg.gan.lambda_fm) + l_adv_g + conf.l_s + conf.l_f + cpc.mean;
        let grads = g.backward(objective).for_store(&self.generator);
        if grads.iter().flatten().any(|t| !t.all_finite()) {
            return Err(SvcError::NonFiniteLoss { component: "generator gradient", step });
        }
        self.generator_opt.step(&mut self.generator, &grads, lr);
        self.step += 1;

        let l_hifi = cfg.gan.lambda_mel * v_mel + cfg.gan.lambda_fm * v_fm + v_adv_g;
        let l_confusion = confusion_loss(v_s, v_f, cfg.confusion.lambda, cfg.confusion.omega);
        let mut flags = Vec::new();
        if conf.no_voiced_frames {
            flags.push(FLAG_NO_VOICED.to_string());
        }
        if cpc.degenerate {
            flags.push(FLAG_CPC_DEGENERATE.to_string());
        }
        Ok(LossReport {
            step,
            learning_rate: lr,
            l_mel: v_mel,
            l_fm: v_fm,
            l_adv_g: v_adv_g,
            l_adv_d,
            l_hifi,
            l_s: v_s,
            l_f: v_f,
            l_confusion,
            l_cpc: v_cpc,
            l_cpc_raw: v_cpc_raw,
            l_g: l_hifi + l_confusion + v_cpc,
            flags,
        })
    }

    pub fn to_container(&self) -> Container {
        let mut tensors = Vec::new();
        for (group, store, opt) in [
            ("generator", &self.generator, &self.generator_opt),
            ("discriminator", &self.discriminator, &self.discriminator_opt),
        ] {
            let named = |suffix: &str, values: Vec<&Tensor<f32>>| {
                store
                    .iter()
                    .zip(values)
                    .map(|((_, name, _), t)| NamedTensor {
                        group: format!("{group}{suffix}"),
                        name: name.to_string(),
                        shape: t.shape().to_vec(),
                        data: t.data().to_vec(),
                    })
                    .collect::<Vec<_>>()
            };
            tensors.extend(named("", store.iter().map(|(_, _, t)| t).collect()));
            tensors.extend(named(".adam_m", opt.first_moments().iter().collect()));
            tensors.extend(named(".adam_v", opt.second_moments().iter().collect()));
        }
        Container {
            info: CheckpointInfo {
                software_version: software_version(),
                config: self.config.clone(),
                meta: self.meta.clone(),
                step: self.step,
                generator_optimizer_steps: self.generator_opt.steps(),
                discriminator_optimizer_steps: self.discriminator_opt.steps(),
            },
            tensors,
        }
    }

    /// Rebuilds the state, requiring every parameter and moment by name with
    /// a matching shape.
    pub fn from_container(c: &Container) -> Result<Self> {
        let mut state = Self::new(c.info.config.clone(), c.info.meta.clone())?;
        state.step = c.info.step;
        let adam = adam_config(&state.config);
        for (group, store, opt, steps) in [
            ("generator", &mut state.generator, &mut state.generator_opt, c.info.generator_optimizer_steps),
            (
                "discriminator",
                &mut state.discriminator,
                &mut state.discriminator_opt,
                c.info.discriminator_optimizer_steps,
            ),
        ] {
            fill_store(store, c, group)?;
            let moments = |suffix: &str| -> Result<Vec<Tensor<f32>>> {
                let mut tmp = store.clone();
                fill_store(&mut tmp, c, &format!("{group}{suffix}"))?;
                Ok(tmp.iter().map(|(_, _, t)| t.clone()).collect())
            };
            *opt = Adam::from_state(adam, steps, moments(".adam_m")?, moments(".adam_v")?);
        }
        Ok(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

fn adam_config(config: &RunConfig) -> AdamConfig {
    AdamConfig {
        beta1: config.train.adam_beta1,
        beta2: config.train.adam_beta2,
        eps: config.train.adam_eps,
    }
}

/// Overwrites every parameter of `store` from the container group, requiring
/// each by name with a matching shape.
pub fn fill_store(store: &mut ParamStore<f32>, c: &Container, group: &str) -> Result<()> {
    let mut seen = 0;
    for t in c.group(group) {
        let id = store
            .id(&t.name)
            .ok_or_else(|| SvcError::Checkpoint(format!("{group}: unexpected tensor `{}`", t.name)))?;
        let target = store.get_mut(id);
        if target.shape() != t.shape.as_slice() {
            return Err(SvcError::Checkpoint(format!(
                "{group}: tensor `{}` has shape {:?}, model expects {:?}",
                t.name,
                t.shape,
                target.shape()
            )));
        }
        target.data_mut().copy_from_slice(&t.data);
        seen += 1;
    }
    if seen != store.len() {
        return Err(SvcError::Checkpoint(format!(
            "{group}: found {seen} tensors, model has {}",
            store.len()
        )));
    }
    Ok(())
}

/// `[a; b]` along the batch axis.
fn stack_batch(a: &Tensor<f32>, b: &Tensor<f32>) -> Tensor<f32> {
    let mut shape = a.shape().to_vec();
    shape[0] += b.dim(0);
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new(&shape, data)
}

/// Where and how `fit` records progress.
#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Checkpoints go here as `step_XXXXXXXX.svck` plus `latest.svck`.
    pub checkpoint_dir: Option<PathBuf>,
    /// JSONL loss log; appended to when resuming.
    pub log_path: Option<PathBuf>,
    /// Stop at this step instead of `train.max_steps`.
    pub stop_at: Option<u64>,
}

/// First line of a fresh loss log.
#[derive(Serialize)]
struct LogHeader<'a> {
    software_version: String,
    config: &'a RunConfig,
}

/// Trains from the state's current step to the stop step, writing a loss
/// line per step and checkpoints at the configured interval and at the end.
/// Returns the reports of the steps run.
pub fn fit(state: &mut TrainState, items: &[TrainingItem], opts: &FitOptions) -> Result<Vec<LossReport>> {
    if items.is_empty() {
        return Err(SvcError::InvalidInput("training set is empty".into()));
    }
    if let Some(bad) = items.iter().find(|i| i.singer >= state.meta.dims.num_singers) {
        return Err(SvcError::InvalidInput(format!("{}: singer index {} out of range", bad.id, bad.singer)));
    }
    let stop = opts.stop_at.unwrap_or(state.config.train.max_steps);
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(SvcError::io(format!("creating {}", dir.display())))?;
    }
    let mut log = match &opts.log_path {
        Some(path) => Some(open_log(path, state)?),
        None => None,
    };
    let interval = state.config.train.checkpoint_interval;
    let mut reports = Vec::new();
    while state.step < stop {
        let t = &state.config.train;
        let batch = sample_batch(items, state.config.seed, state.step, t.batch_size, t.segment_frames)?;
        let report = state.train_step(&batch)?;
        if let Some(w) = log.as_mut() {
            serde_json::to_writer(&mut *w, &report)?;
            w.write_all(b"\n").map_err(SvcError::io("writing loss log"))?;
        }
        reports.push(report);
        if let Some(dir) = &opts.checkpoint_dir {
            if interval > 0 && state.step.is_multiple_of(interval) && state.step < stop {
                save_checkpoint(state, dir)?;
            }
        }
    }
    if let Some(w) = log.as_mut() {
        w.flush().map_err(SvcError::io("writing loss log"))?;
    }
    if let Some(dir) = &opts.checkpoint_dir {
        save_checkpoint(state, dir)?;
    }
    Ok(reports)
}

fn open_log(path: &Path, state: &TrainState) -> Result<BufWriter<File>> {
    let fresh = state.step == 0 || !path.exists();
    let file = if fresh {
        File::create(path)
    } else {
        OpenOptions::new().append(true).open(path)
    }
    .map_err(SvcError::io(format!("opening loss log {}", path.display())))?;
    let mut w = BufWriter::new(file);
    if fresh {
        serde_json::to_writer(
            &mut w,
            &LogHeader {
                software_version: software_version(),
                config: &state.config,
            },
        )?;
        w.write_all(b"\n").map_err(SvcError::io("writing loss log"))?;
    }
    Ok(w)
}

/// Writes `step_XXXXXXXX.svck` and refreshes `latest.svck`; returns the
/// step file's path.
pub fn save_checkpoint(state: &TrainState, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(format!("step_{:08}.svck", state.step));
    let container = state.to_container();
    container.save(&path)?;
    container.save(dir.join("latest.svck"))?;
    Ok(path)
}
