//! Audio containers, analysis front ends and feature files.

use std::sync::Arc;

use svc_autograd::{Graph, Tensor};
use svc_core::features::mel::{hann_window, hz_to_mel, mel_centers_hz, mel_to_hz, F_MAX, N_BINS, POWER_FLOOR};
use svc_core::features::svcf::{decode, encode};
use svc_core::features::wav::{decode_wav, encode_wav_pcm16, encode_wav_pcm16_with_metadata, wav_metadata};
use svc_core::features::{
    extract_f0, extract_mel, fit_codebook, frame_count, AudioClip, Codebook, ContentKind, FeatureKind, FrameMatrix, MelAnalyzer, PitchTrack, N_MELS,
    SAMPLE_RATE, WINDOW,
};

fn tone(hz: f64, secs: f64) -> AudioClip {
    let n = (secs * SAMPLE_RATE as f64) as usize;
    let s = (0..n)
        .map(|i| (0.5 * (2.0 * std::f64::consts::PI * hz * i as f64 / SAMPLE_RATE as f64).sin()) as f32)
        .collect();
    AudioClip::new(s, SAMPLE_RATE).unwrap()
}

fn median(mut v: Vec<f32>) -> f32 {
    v.sort_by(f32::total_cmp);
    v[v.len() / 2]
}

#[test]
fn clip_rejects_wrong_rate() {
    let err = AudioClip::new(vec![0.0; 10], 16_000).unwrap_err();
    assert!(err.to_string().contains("24000"), "{err}");
}

#[test]
fn clip_rejects_out_of_range_and_empty() {
    assert!(AudioClip::new(vec![0.0, 1.5], SAMPLE_RATE).is_err());
    assert!(AudioClip::new(vec![f32::NAN], SAMPLE_RATE).is_err());
    assert!(AudioClip::new(vec![], SAMPLE_RATE).is_err());
}

#[test]
fn frame_arithmetic() {
    assert_eq!(frame_count(24_000), 101);
    assert_eq!(frame_count(239), 1);
    assert_eq!(frame_count(240), 2);
}

#[test]
fn nearest_resampling_and_crop_padding() {
    let m = FrameMatrix::new(2, 1, vec![1.0, 2.0]);
    assert_eq!(m.resample_nearest(4).data(), &[1.0, 1.0, 2.0, 2.0]);
    let m = FrameMatrix::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m.resample_nearest(2).data(), &[1.0, 3.0]);
    assert_eq!(m.crop(3, 3).data(), &[4.0, 4.0, 4.0]);
}

#[test]
fn sine_220_is_tracked() {
    let track = extract_f0(&tone(220.0, 1.0));
    let interior: Vec<usize> = (3..track.len() - 3).collect();
    let voiced: Vec<f32> = interior.iter().filter(|&&t| track.voiced()[t]).map(|&t| track.f0_hz()[t]).collect();
    assert!(voiced.len() as f64 >= 0.9 * interior.len() as f64);
    assert!((median(voiced) - 220.0).abs() < 0.03 * 220.0);
}

#[test]
fn silence_is_unvoiced() {
    let clip = AudioClip::new(vec![0.0; 4800], SAMPLE_RATE).unwrap();
    let track = extract_f0(&clip);
    assert_eq!(track.voiced_count(), 0);
    assert!(track.f0_hz().iter().all(|&f| f == 0.0));
}

#[test]
fn no_octave_errors_on_pure_tones() {
    for hz in [100.0, 150.0, 310.0, 523.0, 800.0] {
        let track = extract_f0(&tone(hz, 0.5));
        let v: Vec<f32> = track.f0_hz().iter().copied().filter(|&f| f > 0.0).collect();
        let m = median(v) as f64;
        assert!((m - hz).abs() < 0.05 * hz, "{hz} Hz tracked as {m}");
    }
}

#[test]
fn pitch_matrix_round_trip() {
    let t = PitchTrack::new(vec![0.0, 120.0], vec![false, true]).unwrap();
    assert_eq!(PitchTrack::from_matrix(&t.to_matrix()).unwrap(), t);
    assert!(PitchTrack::new(vec![10.0], vec![true]).is_err());
}

#[test]
fn single_center_is_the_mean() {
    let m = FrameMatrix::new(20, 2, (0..40).map(|i| i as f32).collect());
    let cb = fit_codebook(std::slice::from_ref(&m), 1, 0).unwrap();
    let mean0 = (0..20).map(|t| m.row(t)[0] as f64).sum::<f64>() / 20.0;
    assert!((cb.centers[0][0] as f64 - mean0).abs() < 1e-5);
}

#[test]
fn codebook_needs_enough_frames() {
    let m = FrameMatrix::zeros(15, 3);
    assert!(fit_codebook(&[m], 2, 0).is_err());
}

#[test]
fn equidistant_frame_is_uniform() {
    let cb = Codebook {
        centers: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
        temperature: 0.7,
    };
    let p = cb.pseudo_content(&FrameMatrix::zeros(1, 2)).unwrap();
    assert!(p.frames.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
    assert!(cb.pseudo_content(&FrameMatrix::zeros(1, 3)).is_err());
}

#[test]
fn pcm16_round_trip_within_quantization() {
    let samples: Vec<f32> = (0..500).map(|i| ((i as f32) * 0.05).sin() * 0.9).collect();
    let clip = AudioClip::new(samples.clone(), SAMPLE_RATE).unwrap();
    let (back, rate) = decode_wav(&encode_wav_pcm16(&clip)).unwrap();
    assert_eq!(rate, SAMPLE_RATE);
    assert_eq!(back.len(), samples.len());
    for (a, b) in samples.iter().zip(&back) {
        assert!((a - b).abs() < 1.0 / 16000.0);
    }
}

#[test]
fn metadata_chunk_is_skipped_by_decoder() {
    let clip = AudioClip::new(vec![0.5, -0.25, 0.0], SAMPLE_RATE).unwrap();
    let plain = encode_wav_pcm16(&clip);
    let tagged = encode_wav_pcm16_with_metadata(&clip, b"{\"a\":1}");
    assert_eq!(decode_wav(&tagged).unwrap(), decode_wav(&plain).unwrap());
    assert_eq!(wav_metadata(&tagged), Some(&b"{\"a\":1}"[..]));
    assert_eq!(wav_metadata(&plain), None);
    let riff_size = u32::from_le_bytes(tagged[4..8].try_into().unwrap()) as usize;
    assert_eq!(riff_size, tagged.len() - 8);
}

#[test]
fn float_wav_is_read() {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36u32 + 8).to_le_bytes());
    bytes.extend_from_slice(b"WAVEfmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&3u16.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&24_000u32.to_le_bytes());
    bytes.extend_from_slice(&96_000u32.to_le_bytes());
    bytes.extend_from_slice(&4u16.to_le_bytes());
    bytes.extend_from_slice(&32u16.to_le_bytes());
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&8u32.to_le_bytes());
    bytes.extend_from_slice(&0.25f32.to_le_bytes());
    bytes.extend_from_slice(&(-0.5f32).to_le_bytes());
    let (s, r) = decode_wav(&bytes).unwrap();
    assert_eq!((s, r), (vec![0.25, -0.5], 24_000));
}

#[test]
fn truncated_and_garbage_wav_rejected() {
    let clip = AudioClip::new(vec![0.1; 100], SAMPLE_RATE).unwrap();
    let bytes = encode_wav_pcm16(&clip);
    assert!(decode_wav(&bytes[..60]).is_err());
    assert!(decode_wav(b"hello world, not a wav").is_err());
}

#[test]
fn svcf_round_trip_is_bit_exact() {
    let m = FrameMatrix::new(3, 2, vec![1.5, -0.0, f32::MIN_POSITIVE, 1e30, -7.25, 0.1]);
    let bytes = encode(FeatureKind::Content(ContentKind::ExternalHubert), &m);
    let (kind, back) = decode(&bytes).unwrap();
    assert_eq!(kind, FeatureKind::Content(ContentKind::ExternalHubert));
    assert_eq!(encode(kind, &back), bytes);
}

#[test]
fn svcf_rejects_malformed() {
    let m = FrameMatrix::new(2, 2, vec![0.0; 4]);
    let bytes = encode(FeatureKind::Pitch, &m);
    let err = decode(&bytes[..bytes.len() - 3]).unwrap_err();
    assert!(err.contains("expected 29") && err.contains("found 26"), "{err}");
    assert!(decode(b"NOPE").is_err());
    let mut zero_dim = bytes.clone();
    zero_dim[8..12].copy_from_slice(&0u32.to_le_bytes());
    assert!(decode(&zero_dim).unwrap_err().contains("dimension is 0"));
    let nan = encode(FeatureKind::Pitch, &FrameMatrix::new(1, 2, vec![1.0, f32::NAN]));
    assert!(decode(&nan).unwrap_err().contains("NaN"));
}

#[test]
fn mel_scale_round_trips() {
    for hz in [0.0, 440.0, 999.0, 1000.0, 5000.0, 12000.0] {
        assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
    }
    let c = mel_centers_hz();
    assert!(c.windows(2).all(|w| w[0] < w[1]));
    assert!(c[N_MELS - 1] < F_MAX);
}

#[test]
fn window_is_periodic_hann() {
    let w = hann_window();
    assert_eq!(w[0], 0.0);
    assert!((w[WINDOW / 2] - 1.0).abs() < 1e-12);
    assert!((w[1] - w[WINDOW - 1]).abs() < 1e-12);
}

#[test]
fn silence_hits_mel_floor() {
    let clip = AudioClip::new(vec![0.0; 24_000], SAMPLE_RATE).unwrap();
    let mel = extract_mel(&clip);
    assert_eq!((mel.frames(), mel.dim()), (101, 80));
    let floor = (POWER_FLOOR as f32).ln();
    assert!(mel.data().iter().all(|&v| v == floor));
}

#[test]
fn spectrum_gradient_matches_finite_differences() {
    let analyzer = Arc::new(MelAnalyzer::<f64>::new());
    let wave: Vec<f64> = (0..700).map(|i| ((i as f64) * 0.37).sin() * 0.3 + ((i * 7 % 13) as f64) * 0.01).collect();
    let probe: Vec<f64> = (0..frame_count(700) * N_BINS).map(|i| ((i % 17) as f64 - 8.0) * 0.01).collect();
    let probe = Tensor::new(&[1, frame_count(700), N_BINS], probe);
    let loss = |w: &[f64]| {
        let g = Graph::<f64>::inference();
        let x = g.constant(Tensor::new(&[1, w.len()], w.to_vec()));
        (analyzer.power_spectrogram(x) * g.constant(probe.clone())).sum().item()
    };
    let g = Graph::<f64>::new();
    let x = g.input(Tensor::new(&[1, 700], wave.clone()));
    let l = (analyzer.power_spectrogram(x) * g.constant(probe.clone())).sum();
    let grads = g.backward(l);
    let analytic = grads.wrt(x).unwrap();
    for &n in &[0usize, 1, 100, 239, 240, 480, 699] {
        let mut p = wave.clone();
        p[n] += 1e-5;
        let mut m = wave.clone();
        m[n] -= 1e-5;
        let numeric = (loss(&p) - loss(&m)) / 2e-5;
        let a = analytic.data()[n];
        assert!((a - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()), "n={n}: {a} vs {numeric}");
    }
}
