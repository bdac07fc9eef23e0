//! Pipeline stages under the sequential and parallel execution policies.
//!
//! Stages that take an explicit `Exec` are compared directly. The rest pick
//! their policy from the `parallel` feature; compare `cargo bench` with
//! `cargo bench --no-default-features` for those.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use svc_autograd::Exec;
use svc_core::config::{Profile, RunConfig};
use svc_core::corpus::{singer_id, toy_clip, ToyCorpusSpec};
use svc_core::dataset::{in_memory_dataset, LabeledClip};
use svc_core::features::{extract_f0_with, extract_mel, PitchConfig};
use svc_core::inference::Synthesizer;
use svc_core::trainer::{sample_batch, TrainState};

fn clips() -> Vec<LabeledClip> {
    let spec = ToyCorpusSpec::default();
    (0..spec.singers)
        .flat_map(|s| (0..spec.clips_per_singer).map(move |c| (s, c)))
        .map(|(s, c)| LabeledClip {
            id: format!("{s}_{c}"),
            singer: singer_id(s),
            clip: toy_clip(&spec, s, c),
        })
        .collect()
}

fn pitch_tracking(c: &mut Criterion) {
    let clip = toy_clip(&ToyCorpusSpec::default(), 0, 0);
    let cfg = PitchConfig::default();
    let mut group = c.benchmark_group("pitch_1s");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| extract_f0_with(black_box(&clip), &cfg, exec))
        });
    }
    group.finish();
}

fn corpus_analysis(c: &mut Criterion) {
    let clips = clips();
    let cfg = PitchConfig::default();
    let mut group = c.benchmark_group("analyze_10_clips");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| exec.map(&clips, |c| (extract_mel(&c.clip), extract_f0_with(&c.clip, &cfg, Exec::Sequential))))
        });
    }
    group.finish();
}

fn training_and_conversion(c: &mut Criterion) {
    let mut cfg = RunConfig::profile(Profile::Desk);
    cfg.train.batch_size = 2;
    cfg.train.segment_frames = 40;
    let clips = clips();
    let (items, meta) = in_memory_dataset(&clips, &cfg).unwrap();
    let mut state = TrainState::new(cfg.clone(), meta).unwrap();
    let batch = sample_batch(&items, 0, 0, 2, 40).unwrap();
    let mut group = c.benchmark_group("model");
    group.sample_size(10);
    group.bench_function("desk_train_step_b2_t40", |b| b.iter(|| state.train_step(black_box(&batch)).unwrap()));

    let synth = Synthesizer::from_state(&state);
    let inputs: Vec<_> = clips.iter().map(|c| synth.prepare(&c.clip).unwrap()).collect();
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::new("render_10_clips", format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| exec.map(&inputs, |input| synth.render(input, 1).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, pitch_tracking, corpus_analysis, training_and_conversion);
criterion_main!(benches);
