use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--set",
    "train.max_steps=2",
    "--set",
    "train.batch_size=2",
    "--set",
    "train.segment_frames=30",
    "--set",
    "train.checkpoint_interval=1",
    "--set",
    "model.decoder.initial_channels=16",
    "--set",
    "model.cbhg.channels=8",
    "--set",
    "model.cbhg.gru_hidden=8",
    "--set",
    "model.content_encoder_dim=8",
    "--set",
    "model.reference_encoder_dim=8",
    "--set",
    "model.singer_dim=4",
    "--set",
    "features.codebook_size=4",
    "--set",
    "cpc.K=3",
    "--set",
    "cpc.n_neg=2",
    "--set",
    "eval.embedder_steps=5",
];

fn svc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svc")).args(args).output().expect("svc runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn toy(dir: &Path, singers: &str, clips: &str, seconds: &str) -> PathBuf {
    let out = svc(&["toy-corpus", "--out", s(dir), "--singers", singers, "--clips", clips, "--seconds", seconds]);
    assert!(out.status.success(), "{}", stderr(&out));
    dir.join("manifest.jsonl")
}

fn svcf_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "svcf"))
        .collect();
    v.sort();
    v
}

#[test]
fn extraction_counts_files_and_skips_fresh_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = toy(&tmp.path().join("corpus"), "2", "1", "1.0");
    let feats = tmp.path().join("features");
    let first = svc(&["extract-features", "--manifest", s(&manifest), "--out", s(&feats)]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert_eq!(svcf_files(&feats).len(), 6);
    let index: serde_json::Value = serde_json::from_str(&fs::read_to_string(feats.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["entries"].as_array().unwrap().len(), 2);
    assert!(index["software_version"].is_string());
    assert_eq!(index["config"]["profile"], "desk");

    let stamps: Vec<_> = svcf_files(&feats).iter().map(|p| fs::metadata(p).unwrap().modified().unwrap()).collect();
    let index_before = fs::read(feats.join("index.json")).unwrap();
    let second = svc(&["extract-features", "--manifest", s(&manifest), "--out", s(&feats)]);
    assert!(second.status.success(), "{}", stderr(&second));
    assert!(String::from_utf8_lossy(&second.stdout).contains("0 files written"));
    let after: Vec<_> = svcf_files(&feats).iter().map(|p| fs::metadata(p).unwrap().modified().unwrap()).collect();
    assert_eq!(stamps, after);
    assert_eq!(index_before, fs::read(feats.join("index.json")).unwrap());
}

#[test]
fn corrupt_audio_fails_without_blocking_other_files() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = toy(&tmp.path().join("corpus"), "2", "2", "1.0");
    let bad = tmp.path().join("corpus/audio/singer_00_001.wav");
    fs::write(&bad, b"RIFF garbage").unwrap();
    let feats = tmp.path().join("features");
    let out = svc(&["extract-features", "--manifest", s(&manifest), "--out", s(&feats)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("singer_00_001.wav"), "{}", stderr(&out));
    assert_eq!(svcf_files(&feats).len(), 9);
}

#[test]
fn bad_config_key_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = toy(&tmp.path().join("corpus"), "1", "1", "0.5");
    let out = svc(&[
        "extract-features",
        "--manifest",
        s(&manifest),
        "--out",
        s(&tmp.path().join("f")),
        "--set",
        "features.codebook_sise=3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("codebook_sise"), "{}", stderr(&out));
    let out = svc(&["train", "--manifest", s(&manifest)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_convert_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = toy(&tmp.path().join("corpus"), "2", "3", "0.5");
    let feats = tmp.path().join("features");
    let run = tmp.path().join("run");
    let mut args = vec!["extract-features", "--manifest", s(&manifest), "--out", s(&feats)];
    args.extend_from_slice(TINY);
    let out = svc(&args);
    assert!(out.status.success(), "{}", stderr(&out));

    let mut args = vec!["train", "--manifest", s(&manifest), "--features", s(&feats), "--out", s(&run)];
    args.extend_from_slice(TINY);
    let out = svc(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = run.join("checkpoints/latest.svck");
    assert!(ckpt.exists());
    assert!(run.join("checkpoints/step_00000001.svck").exists());
    let log = fs::read_to_string(run.join("loss.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0]["software_version"].is_string());
    assert_eq!(lines[0]["config"]["train"]["max_steps"], 2);
    assert!(lines[2]["L_G"].is_f64());
    let split: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("split.json")).unwrap()).unwrap();
    let total: usize = ["train", "valid", "test"].iter().map(|k| split[k].as_array().unwrap().len()).sum();
    assert_eq!(total, 6);

    let resumed = svc(&[
        "train",
        "--manifest",
        s(&manifest),
        "--features",
        s(&feats),
        "--out",
        s(&run),
        "--checkpoint",
        s(&ckpt),
        "--set",
        "train.max_steps=3",
    ]);
    assert!(resumed.status.success(), "{}", stderr(&resumed));
    assert_eq!(fs::read_to_string(run.join("loss.jsonl")).unwrap().lines().count(), 4);

    let source = tmp.path().join("corpus/audio/singer_00_000.wav");
    let wav_a = tmp.path().join("a.wav");
    let wav_b = tmp.path().join("b.wav");
    for target in [&wav_a, &wav_b] {
        let out = svc(&["convert", "--checkpoint", s(&ckpt), "--source", s(&source), "--singer", "singer_01", "--out", s(target)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let bytes = fs::read(&wav_a).unwrap();
    assert_eq!(bytes, fs::read(&wav_b).unwrap());
    let (samples, rate) = svc_core::features::wav::decode_wav(&bytes).unwrap();
    assert_eq!(rate, 24_000);
    assert_eq!(samples.len(), 240 * 51);
    let meta: serde_json::Value = serde_json::from_slice(svc_core::features::wav::wav_metadata(&bytes).unwrap()).unwrap();
    assert_eq!(meta["target_singer"], "singer_01");
    assert!(meta["config"]["model"].is_object());

    let out = svc(&["convert", "--checkpoint", s(&ckpt), "--source", s(&source), "--singer", "nobody", "--out", s(&wav_a)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("singer_00, singer_01"), "{}", stderr(&out));

    let report_dir = tmp.path().join("report");
    let out = svc(&["evaluate", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--out", s(&report_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    let pairs = report["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 12);
    for p in pairs {
        if let Some(v) = p["ncc"].as_f64() {
            assert!((-1.0..=1.0).contains(&v));
        }
    }
    assert!(report["config"].is_object());
    let table = fs::read_to_string(report_dir.join("report.txt")).unwrap();
    assert!(table.contains("COS-SIM"));

    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let empty_dir = tmp.path().join("empty_report");
    let out = svc(&["evaluate", "--checkpoint", s(&ckpt), "--manifest", s(&empty), "--out", s(&empty_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(empty_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pairs"].as_array().unwrap().len(), 0);
    assert!(report["ncc"].is_null());
}

#[test]
fn missing_checkpoint_is_a_clean_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = svc(&[
        "convert",
        "--checkpoint",
        s(&tmp.path().join("none.svck")),
        "--source",
        s(&tmp.path().join("x.wav")),
        "--singer",
        "a",
        "--out",
        s(&tmp.path().join("y.wav")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("none.svck"), "{}", stderr(&out));
    assert!(!stderr(&out).contains("panicked"));
}
