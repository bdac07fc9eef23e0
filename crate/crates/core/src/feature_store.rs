//! Extracted features on disk.
//!
//! `extract_features` writes, per manifest entry, a mel file, a pitch file
//! and (when an encoder uses it) a pseudo posteriorgram file, all in the
//! `SVCF` format, plus an `index.json` that records the audio hash behind
//! every file, the feature settings and the fitted codebook. Reruns skip
//! entries whose audio, settings and output files are unchanged.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use svc_autograd::Exec;

use crate::checkpoint::software_version;
use crate::config::RunConfig;
use crate::dataset::{analyze_clip, effective_codebook_size, meta_for, uses_codebook};
use crate::error::{Result, SvcError};
use crate::features::content::ContentKind;
use crate::features::svcf::{self, load_content, load_pitch};
use crate::features::wav::decode_wav;
use crate::features::{fit_codebook, AudioClip, Codebook, FeatureKind, FrameMatrix, PitchTrack};
use crate::manifest::{Domain, ManifestEntry};
use crate::model::ModelMeta;
use crate::trainer::TrainingItem;

pub const INDEX_FILE: &str = "index.json";
pub const MEL: &str = "mel";
pub const PITCH: &str = "pitch";
pub const PSEUDO_PPG: &str = "pseudo_ppg";

/// One written feature file, relative to the feature directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    pub file: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub audio: PathBuf,
    pub singer: String,
    pub domain: Domain,
    pub audio_sha256: String,
    pub frames: usize,
    /// Keyed by [`MEL`], [`PITCH`] and [`PSEUDO_PPG`].
    pub files: BTreeMap<String, FileRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureIndex {
    pub software_version: String,
    /// Configuration of the extraction run.
    pub config: RunConfig,
    /// Hash of the feature settings and seed the files were computed with.
    pub settings_sha256: String,
    pub codebook: Option<Codebook>,
    pub entries: Vec<IndexEntry>,
}

/// Outcome of an extraction run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtractSummary {
    pub written: usize,
    pub skipped: usize,
    /// Audio path and reason for every entry that could not be processed.
    pub failures: Vec<(PathBuf, String)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything that changes feature values: feature settings and the seed
/// used to fit the codebook.
pub fn settings_hash(cfg: &RunConfig) -> String {
    let key = serde_json::json!({ "features": cfg.features, "seed": cfg.seed });
    sha256_hex(key.to_string().as_bytes())
}

/// Stable base name for an entry's files: audio stem plus a hash of the path.
fn base_name(audio: &Path) -> String {
    let stem = audio.file_stem().map_or_else(|| "clip".into(), |s| s.to_string_lossy().into_owned());
    let tag = sha256_hex(audio.to_string_lossy().as_bytes());
    format!("{stem}_{}", &tag[..12])
}

fn index_path(dir: &Path) -> PathBuf {
    dir.join(INDEX_FILE)
}

/// Returns the record if the file on disk still has the recorded hash.
fn fresh_record(dir: &Path, old: Option<&IndexEntry>, key: &str) -> Option<FileRecord> {
    let rec = old?.files.get(key)?;
    let bytes = fs::read(dir.join(&rec.file)).ok()?;
    (sha256_hex(&bytes) == rec.sha256).then(|| rec.clone())
}

fn write_feature(dir: &Path, name: String, kind: FeatureKind, m: &FrameMatrix) -> Result<FileRecord> {
    let bytes = svcf::encode(kind, m);
    let path = dir.join(&name);
    fs::write(&path, &bytes).map_err(SvcError::io(format!("writing {}", path.display())))?;
    Ok(FileRecord {
        file: PathBuf::from(name),
        sha256: sha256_hex(&bytes),
    })
}

struct Analyzed {
    entry: IndexEntry,
    mel: FrameMatrix,
    fresh: bool,
    written: usize,
}

fn analyze_entry(dir: &Path, e: &ManifestEntry, cfg: &RunConfig, old: Option<&IndexEntry>) -> Result<Analyzed> {
    let bytes = fs::read(&e.audio).map_err(SvcError::io(format!("reading {}", e.audio.display())))?;
    let audio_sha256 = sha256_hex(&bytes);
    let old = old.filter(|o| o.audio_sha256 == audio_sha256);
    let base = base_name(&e.audio);
    let mut entry = IndexEntry {
        audio: e.audio.clone(),
        singer: e.singer.clone(),
        domain: e.domain,
        audio_sha256,
        frames: 0,
        files: BTreeMap::new(),
    };
    if let (Some(mel_rec), Some(pitch_rec)) = (fresh_record(dir, old, MEL), fresh_record(dir, old, PITCH)) {
        let (_, mel) = svcf::read(dir.join(&mel_rec.file))?;
        entry.frames = mel.frames();
        entry.files.insert(MEL.into(), mel_rec);
        entry.files.insert(PITCH.into(), pitch_rec);
        return Ok(Analyzed {
            entry,
            mel,
            fresh: true,
            written: 0,
        });
    }
    let (samples, rate) = decode_wav(&bytes).map_err(|reason| SvcError::Wav {
        path: e.audio.clone(),
        reason,
    })?;
    let clip = AudioClip::new(samples, rate)?;
    let analysis = analyze_clip(&clip, cfg);
    entry.frames = analysis.mel.frames();
    entry.files.insert(
        MEL.into(),
        write_feature(dir, format!("{base}.mel.svcf"), FeatureKind::Content(ContentKind::ExternalMel), &analysis.mel)?,
    );
    entry.files.insert(
        PITCH.into(),
        write_feature(dir, format!("{base}.pitch.svcf"), FeatureKind::Pitch, &analysis.pitch.to_matrix())?,
    );
    Ok(Analyzed {
        entry,
        mel: analysis.mel,
        fresh: false,
        written: 2,
    })
}

fn load_index(dir: &Path) -> Option<FeatureIndex> {
    let text = fs::read_to_string(index_path(dir)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Extracts features for every entry into `dir`. Entries that fail are
/// reported in the summary; the others are still written and indexed.
pub fn extract_features(entries: &[ManifestEntry], dir: &Path, cfg: &RunConfig) -> Result<ExtractSummary> {
    fs::create_dir_all(dir).map_err(SvcError::io(format!("creating {}", dir.display())))?;
    let settings = settings_hash(cfg);
    let old = load_index(dir).filter(|i| i.settings_sha256 == settings);
    let old_entries: BTreeMap<&Path, &IndexEntry> = old
        .iter()
        .flat_map(|i| i.entries.iter().map(|e| (e.audio.as_path(), e)))
        .collect();
    let exec = Exec::default();
    let results = exec.map(entries, |e| analyze_entry(dir, e, cfg, old_entries.get(e.audio.as_path()).copied()));

    let mut summary = ExtractSummary::default();
    let mut done = Vec::new();
    for (e, r) in entries.iter().zip(results) {
        match r {
            Ok(a) => {
                summary.written += a.written;
                summary.skipped += 2 - a.written;
                done.push(a);
            }
            Err(err) => summary.failures.push((e.audio.clone(), err.to_string())),
        }
    }

    let codebook = if uses_codebook(cfg) && !done.is_empty() {
        let same_inputs = old.as_ref().is_some_and(|o| {
            o.codebook.is_some()
                && o.entries.len() == done.len()
                && o.entries.iter().zip(&done).all(|(a, b)| a.audio == b.entry.audio && a.audio_sha256 == b.entry.audio_sha256)
        });
        if same_inputs && done.iter().all(|a| a.fresh) {
            old.as_ref().and_then(|o| o.codebook.clone())
        } else {
            let mels: Vec<FrameMatrix> = done.iter().map(|a| a.mel.clone()).collect();
            let total = mels.iter().map(FrameMatrix::frames).sum();
            let k = effective_codebook_size(cfg, total)?;
            Some(fit_codebook(&mels, k, cfg.seed)?)
        }
    } else {
        None
    };
    let codebook_unchanged = codebook.is_some() && old.as_ref().and_then(|o| o.codebook.as_ref()) == codebook.as_ref();

    if let Some(cb) = &codebook {
        let written = exec.map(&done, |a| -> Result<(Option<FileRecord>, bool)> {
            let prior = old_entries.get(a.entry.audio.as_path()).copied();
            let prior = prior.filter(|p| p.audio_sha256 == a.entry.audio_sha256);
            if codebook_unchanged {
                if let Some(rec) = fresh_record(dir, prior, PSEUDO_PPG) {
                    return Ok((Some(rec), false));
                }
            }
            let ppg = cb.pseudo_content(&a.mel)?;
            let name = format!("{}.ppg.svcf", base_name(&a.entry.audio));
            let rec = write_feature(dir, name, FeatureKind::Content(ContentKind::PseudoPpg), &ppg.frames)?;
            Ok((Some(rec), true))
        });
        let mut keep = Vec::with_capacity(done.len());
        for (mut a, r) in done.into_iter().zip(written) {
            match r {
                Ok((rec, wrote)) => {
                    if wrote {
                        summary.written += 1;
                    } else {
                        summary.skipped += 1;
                    }
                    if let Some(rec) = rec {
                        a.entry.files.insert(PSEUDO_PPG.into(), rec);
                    }
                    keep.push(a);
                }
                Err(err) => summary.failures.push((a.entry.audio.clone(), err.to_string())),
            }
        }
        done = keep;
    }

    let index = FeatureIndex {
        software_version: software_version(),
        config: cfg.clone(),
        settings_sha256: settings,
        codebook,
        entries: done.into_iter().map(|a| a.entry).collect(),
    };
    let text = serde_json::to_string_pretty(&index)? + "\n";
    let path = index_path(dir);
    if fs::read_to_string(&path).ok().as_deref() != Some(text.as_str()) {
        fs::write(&path, text).map_err(SvcError::io(format!("writing {}", path.display())))?;
    }
    Ok(summary)
}

/// Read access to an extracted feature directory.
#[derive(Clone, Debug)]
pub struct FeatureSet {
    pub dir: PathBuf,
    pub index: FeatureIndex,
}

fn run_extraction_hint(dir: &Path) -> String {
    format!("run `svc extract-features --manifest <manifest> --out {}` first", dir.display())
}

impl FeatureSet {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = index_path(&dir);
        let text = fs::read_to_string(&path)
            .map_err(|_| SvcError::MissingFeatures(format!("no {INDEX_FILE} in {}; {}", dir.display(), run_extraction_hint(&dir))))?;
        let index = serde_json::from_str(&text).map_err(|e| SvcError::FeatureFile {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        Ok(Self { dir, index })
    }

    /// Fails unless the features were extracted with `cfg`'s settings.
    pub fn check_settings(&self, cfg: &RunConfig) -> Result<()> {
        if self.index.settings_sha256 != settings_hash(cfg) {
            return Err(SvcError::MissingFeatures(format!(
                "features in {} were extracted with different settings; {}",
                self.dir.display(),
                run_extraction_hint(&self.dir)
            )));
        }
        Ok(())
    }

    pub fn entry(&self, audio: &Path) -> Result<&IndexEntry> {
        self.index.entries.iter().find(|e| e.audio == audio).ok_or_else(|| {
            SvcError::MissingFeatures(format!("{} has no extracted features; {}", audio.display(), run_extraction_hint(&self.dir)))
        })
    }

    fn file(&self, entry: &IndexEntry, key: &str) -> Result<PathBuf> {
        entry.files.get(key).map(|r| self.dir.join(&r.file)).ok_or_else(|| {
            SvcError::MissingFeatures(format!(
                "{} has no {key} feature file; {}",
                entry.audio.display(),
                run_extraction_hint(&self.dir)
            ))
        })
    }

    fn encoder_input(&self, e: &ManifestEntry, ie: &IndexEntry, kind: ContentKind, external: Option<&PathBuf>) -> Result<FrameMatrix> {
        let path = match kind {
            ContentKind::ExternalMel => self.file(ie, MEL)?,
            ContentKind::PseudoPpg => self.file(ie, PSEUDO_PPG)?,
            _ => external.cloned().ok_or_else(|| {
                SvcError::MissingFeatures(format!(
                    "{}: {kind} features must be listed under `features` in the manifest",
                    e.audio.display()
                ))
            })?,
        };
        Ok(load_content(path, Some(kind), Some(ie.frames))?.frames)
    }

    /// Builds a training item, re-reading the audio and checking it still
    /// matches the extracted features.
    pub fn training_item(&self, e: &ManifestEntry, singer: usize, cfg: &RunConfig) -> Result<TrainingItem> {
        let ie = self.entry(&e.audio)?;
        let bytes = fs::read(&e.audio).map_err(SvcError::io(format!("reading {}", e.audio.display())))?;
        if sha256_hex(&bytes) != ie.audio_sha256 {
            return Err(SvcError::MissingFeatures(format!(
                "{} changed since its features were extracted; {}",
                e.audio.display(),
                run_extraction_hint(&self.dir)
            )));
        }
        let (samples, rate) = decode_wav(&bytes).map_err(|reason| SvcError::Wav {
            path: e.audio.clone(),
            reason,
        })?;
        let clip = AudioClip::new(samples, rate)?;
        let external = e.features.as_ref();
        let content = self.encoder_input(e, ie, cfg.features.content, external.and_then(|f| f.content.as_ref()))?;
        let reference = self.encoder_input(e, ie, cfg.features.reference, external.and_then(|f| f.reference.as_ref()))?;
        let pitch = match external.and_then(|f| f.pitch.as_ref()) {
            Some(p) => load_pitch(p)?.resample_nearest(ie.frames),
            None => load_pitch(self.file(ie, PITCH)?)?,
        };
        TrainingItem::new(e.audio.display().to_string(), singer, content, reference, pitch, clip.into_samples())
    }

    /// Training items for `entries`, with singer indices taken from
    /// `singers`.
    pub fn training_items(&self, entries: &[ManifestEntry], singers: &[String], cfg: &RunConfig) -> Result<Vec<TrainingItem>> {
        self.check_settings(cfg)?;
        let results = Exec::default().map(entries, |e| {
            let singer = singers.iter().position(|s| *s == e.singer).ok_or_else(|| SvcError::UnknownSinger {
                requested: e.singer.clone(),
                known: singers.to_vec(),
            })?;
            self.training_item(e, singer, cfg)
        });
        results.into_iter().collect()
    }

    /// Model metadata for a training set drawn from this directory.
    pub fn meta(&self, items: &[TrainingItem], singers: Vec<String>) -> Result<ModelMeta> {
        if items.is_empty() {
            return Err(SvcError::InvalidInput("training set is empty".into()));
        }
        Ok(meta_for(items, singers, self.index.codebook.clone()))
    }

    /// Stored pitch track of an entry.
    pub fn pitch(&self, audio: &Path) -> Result<PitchTrack> {
        load_pitch(self.file(self.entry(audio)?, PITCH)?)
    }
}
