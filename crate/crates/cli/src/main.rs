//! `svc`: feature extraction, training, conversion and evaluation for the
//! singing voice conversion model.
//!
//! Exit codes: 0 on success, 1 when the input or configuration is invalid,
//! 2 when a run fails.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use svc_core::checkpoint::software_version;
use svc_core::config::{Profile, RunConfig};
use svc_core::corpus::{write_toy_corpus, ToyCorpusSpec};
use svc_core::dataset::LabeledClip;
use svc_core::eval::{evaluate_conversion, MetricReport, SpeakerEmbedder};
use svc_core::feature_store::{extract_features, FeatureSet};
use svc_core::features::wav::encode_wav_pcm16_with_metadata;
use svc_core::features::{extract_mel, read_wav};
use svc_core::inference::Synthesizer;
use svc_core::manifest::Manifest;
use svc_core::trainer::{fit, FitOptions, TrainState};
use svc_core::SvcError;

#[derive(Parser)]
#[command(name = "svc", version, about = "Singing voice conversion: extract features, train, convert, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write mel, pitch and content feature files for every manifest entry.
    ExtractFeatures {
        #[arg(long)]
        manifest: PathBuf,
        /// Feature directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train on the training split of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Feature directory written by `extract-features`.
        #[arg(long)]
        features: PathBuf,
        /// Run directory for the loss log, checkpoints and split lists.
        #[arg(long)]
        out: PathBuf,
        /// Resume from this checkpoint; its configuration is used, with
        /// `--set` overrides applied.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Convert a recording to another singer's voice.
    Convert {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Source recording (24 kHz mono WAV).
        #[arg(long)]
        source: PathBuf,
        /// Target singer id.
        #[arg(long)]
        singer: String,
        /// Output WAV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score conversions of every clip in a manifest to every known singer.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Report directory (`report.json`, `report.txt`).
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic multi-singer corpus and its manifest.
    ToyCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        singers: usize,
        #[arg(long, default_value_t = 5)]
        clips: usize,
        #[arg(long, default_value_t = 1.0)]
        seconds: f64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Built-in defaults to start from.
    #[arg(long, default_value = "desk")]
    profile: Profile,
    /// TOML file layered over the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `section.key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        Ok(RunConfig::load(self.profile, self.config.as_deref(), &self.overrides, self.seed)?)
    }
}

/// An error with its exit code.
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<SvcError> for Failure {
    fn from(e: SvcError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn runtime(context: &str) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{context}: {e}"))
}

/// Provenance wrapper for JSON artifacts.
#[derive(Serialize)]
struct Artifact<'a, T> {
    software_version: String,
    config: &'a RunConfig,
    checkpoint_step: u64,
    #[serde(flatten)]
    body: T,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::ExtractFeatures { manifest, out, config } => cmd_extract(&manifest, &out, &config.resolve()?),
        Command::Train {
            manifest,
            features,
            out,
            checkpoint,
            config,
        } => cmd_train(&manifest, &features, &out, checkpoint.as_deref(), &config),
        Command::Convert {
            checkpoint,
            source,
            singer,
            out,
        } => cmd_convert(&checkpoint, &source, &singer, &out),
        Command::Evaluate { checkpoint, manifest, out } => cmd_evaluate(&checkpoint, &manifest, &out),
        Command::ToyCorpus {
            out,
            seed,
            singers,
            clips,
            seconds,
        } => {
            let spec = ToyCorpusSpec {
                singers,
                clips_per_singer: clips,
                seconds,
                seed,
                ..ToyCorpusSpec::default()
            };
            let path = write_toy_corpus(&out, &spec)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn cmd_extract(manifest: &Path, out: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let manifest = Manifest::load(manifest)?;
    let summary = extract_features(&manifest.entries, out, cfg)?;
    println!(
        "{} entries: {} files written, {} up to date, {} failed",
        manifest.len(),
        summary.written,
        summary.skipped,
        summary.failures.len()
    );
    if summary.failures.is_empty() {
        return Ok(());
    }
    for (path, reason) in &summary.failures {
        eprintln!("failed: {}: {reason}", path.display());
    }
    Err(Failure::Runtime(format!("{} of {} entries failed", summary.failures.len(), manifest.len())))
}

/// Split lists written next to the checkpoints.
#[derive(Serialize)]
struct SplitRecord<'a> {
    seed: u64,
    train: Vec<&'a Path>,
    valid: Vec<&'a Path>,
    test: Vec<&'a Path>,
}

fn cmd_train(manifest_path: &Path, feature_dir: &Path, out: &Path, resume: Option<&Path>, args: &ConfigArgs) -> Result<(), Failure> {
    let resumed = match resume {
        Some(path) => {
            let mut state = TrainState::load(path)?;
            state.config = state.config.with_overrides(&args.overrides)?;
            Some(state)
        }
        None => None,
    };
    let cfg = match &resumed {
        Some(s) => s.config.clone(),
        None => args.resolve()?,
    };
    let manifest = Manifest::load(manifest_path)?;
    let split = manifest.split(cfg.seed);
    if split.train.is_empty() {
        return Err(Failure::Validation(format!(
            "the training split of {} is empty ({} entries)",
            manifest_path.display(),
            manifest.len()
        )));
    }
    let features = FeatureSet::open(feature_dir)?;
    let singers = match &resumed {
        Some(s) => s.meta.singers.clone(),
        None => manifest.singers(),
    };
    let items = features.training_items(&split.train, &singers, &cfg)?;
    let mut state = match resumed {
        Some(s) => s,
        None => TrainState::new(cfg.clone(), features.meta(&items, singers)?)?,
    };

    fs::create_dir_all(out).map_err(runtime("creating run directory"))?;
    fs::write(out.join("config.toml"), cfg.to_toml()).map_err(runtime("writing config.toml"))?;
    let record = SplitRecord {
        seed: cfg.seed,
        train: split.train.iter().map(|e| e.audio.as_path()).collect(),
        valid: split.valid.iter().map(|e| e.audio.as_path()).collect(),
        test: split.test.iter().map(|e| e.audio.as_path()).collect(),
    };
    let text = serde_json::to_string_pretty(&record).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(out.join("split.json"), text).map_err(runtime("writing split.json"))?;

    let checkpoint_dir = out.join("checkpoints");
    let opts = FitOptions {
        checkpoint_dir: Some(checkpoint_dir.clone()),
        log_path: Some(out.join("loss.jsonl")),
        stop_at: None,
    };
    let reports = fit(&mut state, &items, &opts)?;
    if let Some(last) = reports.last() {
        println!("step {}: L_G {:.4}, L_mel {:.4}", last.step + 1, last.l_g, last.l_mel);
    }
    println!("{}", checkpoint_dir.join("latest.svck").display());
    Ok(())
}

/// Metadata embedded in converted WAV files.
#[derive(Serialize)]
struct ConversionInfo<'a> {
    source: &'a Path,
    target_singer: &'a str,
}

fn cmd_convert(checkpoint: &Path, source: &Path, singer: &str, out: &Path) -> Result<(), Failure> {
    let synth = Synthesizer::load(checkpoint)?;
    let clip = read_wav(source)?;
    let converted = synth.convert(&clip, singer)?;
    let info = Artifact {
        software_version: software_version(),
        config: &synth.config,
        checkpoint_step: synth.step,
        body: ConversionInfo {
            source,
            target_singer: singer,
        },
    };
    let meta = serde_json::to_vec(&info).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(out, encode_wav_pcm16_with_metadata(&converted, &meta)).map_err(runtime("writing output WAV"))?;
    println!("{} ({} samples)", out.display(), converted.len());
    Ok(())
}

fn cmd_evaluate(checkpoint: &Path, manifest_path: &Path, out: &Path) -> Result<(), Failure> {
    let synth = Synthesizer::load(checkpoint)?;
    let manifest = Manifest::load(manifest_path)?;
    let clips = manifest
        .entries
        .iter()
        .map(|e| {
            Ok(LabeledClip {
                id: e.audio.display().to_string(),
                singer: e.singer.clone(),
                clip: read_wav(&e.audio)?,
            })
        })
        .collect::<Result<Vec<_>, SvcError>>()?;
    let report = if clips.is_empty() {
        MetricReport::default()
    } else {
        let singers = manifest.singers();
        let mels: Vec<_> = clips.iter().map(|c| extract_mel(&c.clip)).collect();
        let examples: Vec<_> = clips
            .iter()
            .zip(&mels)
            .map(|(c, m)| (singers.iter().position(|s| *s == c.singer).expect("listed singer"), m))
            .collect();
        let embedder = SpeakerEmbedder::train(&examples, singers, &synth.config.eval, synth.config.seed)?;
        evaluate_conversion(&synth, &clips, &embedder)?
    };

    fs::create_dir_all(out).map_err(runtime("creating report directory"))?;
    let artifact = Artifact {
        software_version: software_version(),
        config: &synth.config,
        checkpoint_step: synth.step,
        body: &report,
    };
    let json = serde_json::to_string_pretty(&artifact).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(out.join("report.json"), json + "\n").map_err(runtime("writing report.json"))?;

    let mut text = String::new();
    let _ = writeln!(text, "# svc {} | checkpoint step {}", software_version(), synth.step);
    text.push_str(&report.to_table());
    let _ = writeln!(text, "\n# configuration");
    for line in synth.config.to_toml().lines() {
        let _ = writeln!(text, "# {line}");
    }
    fs::write(out.join("report.txt"), &text).map_err(runtime("writing report.txt"))?;
    print!("{}", report.to_table());
    Ok(())
}
