//! Synthetic multi-singer corpus for smoke tests and demos.
//!
//! Each synthetic singer has its own pitch register and formant scaling.
//! A clip is a seeded sequence of sung vowels: a harmonic tone with vibrato
//! whose harmonic amplitudes follow a vowel-dependent formant envelope.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Result, SvcError};
use crate::features::{write_wav, AudioClip, SAMPLE_RATE};
use crate::manifest::{Domain, Manifest, ManifestEntry};
use crate::rng::{purpose, rng_for};

/// First three formant frequencies (Hz) of five vowels.
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
];
const FORMANT_GAINS: [f64; 3] = [1.0, 0.6, 0.3];
/// Semitone offsets of a major scale.
const SCALE: [f64; 8] = [0.0, 2.0, 4.0, 5.0, 7.0, 9.0, 11.0, 12.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyCorpusSpec {
    pub singers: usize,
    pub clips_per_singer: usize,
    pub seconds: f64,
    pub notes_per_second: f64,
    pub seed: u64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        Self {
            singers: 2,
            clips_per_singer: 5,
            seconds: 1.0,
            notes_per_second: 4.0,
            seed: 0,
        }
    }
}

/// Voice parameters of synthetic singer `index`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToySinger {
    /// Lowest note of the register, Hz.
    pub base_hz: f64,
    /// Multiplier applied to every formant frequency.
    pub formant_scale: f64,
    /// Exponent of the `1 / h^tilt` harmonic rolloff.
    pub tilt: f64,
}

impl ToySinger {
    pub fn new(index: usize) -> Self {
        let i = index as f64;
        Self {
            base_hz: 110.0 * 2f64.powf(i * 7.0 / 12.0),
            formant_scale: 0.85 + 0.3 * (i % 3.0),
            tilt: 0.6 + 0.4 * (i % 2.0),
        }
    }
}

pub fn singer_id(index: usize) -> String {
    format!("singer_{index:02}")
}

fn formant_gain(freq: f64, vowel: &[f64; 3], scale: f64) -> f64 {
    let mut g = 0.02;
    for (&f, &w) in vowel.iter().zip(&FORMANT_GAINS) {
        let centre = f * scale;
        let bw = 60.0 + 0.06 * centre;
        g += w * (-0.5 * ((freq - centre) / bw).powi(2)).exp();
    }
    g
}

/// Clip `clip` of singer `singer`, deterministic in the corpus seed.
pub fn toy_clip(spec: &ToyCorpusSpec, singer: usize, clip: usize) -> AudioClip {
    let voice = ToySinger::new(singer);
    let mut rng = rng_for(&[spec.seed, purpose::CORPUS, singer as u64, clip as u64]);
    let rate = SAMPLE_RATE as f64;
    let n = (spec.seconds * rate).round() as usize;
    let note_len = ((rate / spec.notes_per_second).round() as usize).max(1);
    let notes = n.div_ceil(note_len);
    let plan: Vec<(f64, usize)> = (0..notes)
        .map(|_| {
            let semis = SCALE[rng.random_range(0..SCALE.len())];
            (voice.base_hz * 2f64.powf(semis / 12.0), rng.random_range(0..VOWELS.len()))
        })
        .collect();
    let vibrato_rate = 5.0 + rng.random::<f64>();
    let ramp = (0.015 * rate) as usize;
    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (note_hz, vowel) = plan[i / note_len];
        let t = i as f64 / rate;
        let f0 = note_hz * 2f64.powf(0.25 / 12.0 * (2.0 * std::f64::consts::PI * vibrato_rate * t).sin());
        phase = (phase + f0 / rate).fract();
        let pos = i % note_len;
        let env = (pos.min(note_len - 1 - pos) as f64 / ramp.max(1) as f64).min(1.0);
        let mut s = 0.0;
        let mut h = 1;
        while (h as f64) * f0 < 0.45 * rate {
            let amp = formant_gain(h as f64 * f0, &VOWELS[vowel], voice.formant_scale) / (h as f64).powf(voice.tilt);
            s += amp * (2.0 * std::f64::consts::PI * h as f64 * phase).sin();
            h += 1;
        }
        out.push(s * env);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    let samples = out.iter().map(|v| (0.6 * v / peak) as f32).collect();
    AudioClip::new(samples, SAMPLE_RATE).expect("synthetic clip is valid")
}

/// Writes WAV files under `dir` plus `dir/manifest.jsonl`; returns the
/// manifest path.
pub fn write_toy_corpus(dir: impl AsRef<Path>, spec: &ToyCorpusSpec) -> Result<PathBuf> {
    let dir = dir.as_ref();
    if spec.singers == 0 || spec.clips_per_singer == 0 || spec.seconds <= 0.0 {
        return Err(SvcError::InvalidInput(
            "toy corpus needs at least one singer, one clip and a positive duration".into(),
        ));
    }
    let audio_dir = dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(SvcError::io(format!("creating {}", audio_dir.display())))?;
    let mut entries = Vec::new();
    for s in 0..spec.singers {
        for c in 0..spec.clips_per_singer {
            let name = format!("{}_{c:03}.wav", singer_id(s));
            write_wav(audio_dir.join(&name), &toy_clip(spec, s, c))?;
            entries.push(ManifestEntry {
                audio: PathBuf::from("audio").join(name),
                singer: singer_id(s),
                domain: Domain::Singing,
                features: None,
            });
        }
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, Manifest { entries }.to_jsonl()).map_err(SvcError::io(format!("writing {}", path.display())))?;
    Ok(path)
}
