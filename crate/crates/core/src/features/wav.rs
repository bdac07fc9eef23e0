//! Minimal RIFF/WAVE support: mono 16-bit PCM or 32/64-bit float in, 16-bit
//! PCM out.

use std::fs;
use std::path::Path;

use super::audio::{AudioClip, SAMPLE_RATE};
use crate::error::{Result, SvcError};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct Format {
    code: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Decodes WAV bytes into raw samples and the declared sample rate.
pub fn decode_wav(bytes: &[u8]) -> std::result::Result<(Vec<f32>, u32), String> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err("not a RIFF/WAVE file".into());
    }
    let mut pos = 12;
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                format!(
                    "chunk `{}` declares {size} bytes but only {} remain",
                    String::from_utf8_lossy(id),
                    bytes.len() - body_start
                )
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err("fmt chunk too short".into());
                }
                let mut code = u16_at(body, 0);
                if code == FORMAT_EXTENSIBLE && body.len() >= 26 {
                    code = u16_at(body, 24);
                }
                format = Some(Format {
                    code,
                    channels: u16_at(body, 2),
                    sample_rate: u32_at(body, 4),
                    bits: u16_at(body, 14),
                });
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_end + (size & 1);
    }
    let format = format.ok_or("missing fmt chunk")?;
    let data = data.ok_or("missing data chunk")?;
    if format.channels != 1 {
        return Err(format!("expected mono audio, found {} channels", format.channels));
    }
    let samples = match (format.code, format.bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        (FORMAT_FLOAT, 64) => data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as f32)
            .collect(),
        (code, bits) => {
            return Err(format!(
                "unsupported encoding (format {code}, {bits} bits); use 16-bit PCM or float"
            ))
        }
    };
    Ok((samples, format.sample_rate))
}

/// Chunk id under which [`encode_wav_pcm16_with_metadata`] stores its payload.
pub const METADATA_CHUNK: &[u8; 4] = b"svcm";

/// Encodes a clip as mono 16-bit PCM at [`SAMPLE_RATE`].
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    encode(clip, None)
}

/// Like [`encode_wav_pcm16`], with `metadata` appended as an extra chunk that
/// other readers skip.
pub fn encode_wav_pcm16_with_metadata(clip: &AudioClip, metadata: &[u8]) -> Vec<u8> {
    encode(clip, Some(metadata))
}

fn encode(clip: &AudioClip, metadata: Option<&[u8]>) -> Vec<u8> {
    let n = clip.len();
    let data_len = (n * 2) as u32;
    let extra = metadata.map_or(0, |m| 8 + m.len() + (m.len() & 1)) as u32;
    let mut out = Vec::with_capacity(44 + n * 2 + extra as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len + extra).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in clip.samples() {
        let q = (s * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    if let Some(m) = metadata {
        out.extend_from_slice(METADATA_CHUNK);
        out.extend_from_slice(&(m.len() as u32).to_le_bytes());
        out.extend_from_slice(m);
        if m.len() & 1 == 1 {
            out.push(0);
        }
    }
    out
}

/// Payload of the metadata chunk, if the file has one.
pub fn wav_metadata(bytes: &[u8]) -> Option<&[u8]> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return None;
    }
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let size = u32_at(bytes, pos + 4) as usize;
        let end = (pos + 8).checked_add(size).filter(|&e| e <= bytes.len())?;
        if &bytes[pos..pos + 4] == METADATA_CHUNK {
            return Some(&bytes[pos + 8..end]);
        }
        pos = end + (size & 1);
    }
    None
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(SvcError::io(format!("reading {}", path.display())))?;
    let (samples, rate) = decode_wav(&bytes).map_err(|reason| SvcError::Wav {
        path: path.to_path_buf(),
        reason,
    })?;
    AudioClip::new(samples, rate)
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav_pcm16(clip)).map_err(SvcError::io(format!("writing {}", path.display())))
}
