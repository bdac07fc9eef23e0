//! Configuration, manifests, seeding and the synthetic corpus.

use std::path::{Path, PathBuf};

use svc_core::config::{Profile, RunConfig};
use svc_core::corpus::{toy_clip, ToyCorpusSpec, ToySinger};
use svc_core::features::{extract_f0, ContentKind};
use svc_core::manifest::{Domain, Manifest, ManifestEntry};
use svc_core::rng::mix;

#[test]
fn defaults_validate_and_round_trip() {
    for p in [Profile::Desk, Profile::Paper] {
        let c = RunConfig::profile(p);
        c.validate().unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&c.to_toml()).unwrap(), c);
        assert_eq!(c.with_overrides(&[]).unwrap(), c);
    }
    let c = RunConfig::profile(Profile::Desk);
    assert_eq!((c.confusion.lambda, c.confusion.omega, c.cpc.beta, c.cpc.k), (0.1, 0.1, 0.1, 12));
}

#[test]
fn overrides_and_seed() {
    let c = RunConfig::load(
        Profile::Desk,
        None,
        &["cpc.K=4".into(), "train.learning_rate=1e-3".into(), "features.content=external_hubert".into()],
        Some(9),
    )
    .unwrap();
    assert_eq!((c.cpc.k, c.train.learning_rate, c.seed), (4, 1e-3, 9));
    assert_eq!(c.features.content, ContentKind::ExternalHubert);
}

#[test]
fn bad_keys_are_named() {
    let err = RunConfig::load(Profile::Desk, None, &["train.lerning_rate=1".into()], None).unwrap_err();
    assert!(err.to_string().contains("train"), "{err}");
    assert!(err.to_string().contains("lerning_rate"), "{err}");
    let err = RunConfig::load(Profile::Desk, None, &["train.batch_size=\"x\"".into()], None).unwrap_err();
    assert!(err.to_string().contains("train.batch_size"), "{err}");
    let err = RunConfig::load(Profile::Desk, None, &["model.decoder.upsample_rates=[8, 6, 4]".into()], None).unwrap_err();
    assert!(err.to_string().contains("upsample_rates"), "{err}");
}

#[test]
fn manifest_parse_resolves_and_rejects() {
    let path = Path::new("/data/m.jsonl");
    let text = "{\"audio\":\"a.wav\",\"singer\":\"x\",\"domain\":\"singing\"}\n\n\
                {\"audio\":\"/abs/b.wav\",\"singer\":\"y\",\"domain\":\"speech\",\"features\":{\"content\":\"c.svcf\"}}\n";
    let m = Manifest::parse(text, path).unwrap();
    assert_eq!(m.entries[0].audio, PathBuf::from("/data/a.wav"));
    assert_eq!(m.entries[1].audio, PathBuf::from("/abs/b.wav"));
    assert_eq!(m.entries[1].features.as_ref().unwrap().content, Some(PathBuf::from("/data/c.svcf")));
    assert_eq!(m.singers(), vec!["x", "y"]);

    let dup = "{\"audio\":\"a.wav\",\"singer\":\"x\",\"domain\":\"singing\"}\n\
               {\"audio\":\"a.wav\",\"singer\":\"y\",\"domain\":\"singing\"}";
    let err = Manifest::parse(dup, path).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
    let bad = "{\"audio\":\"a.wav\",\"singer\":\"x\",\"domain\":\"opera\"}";
    assert!(Manifest::parse(bad, path).is_err());
}

#[test]
fn split_is_stable_and_near_proportional() {
    let entries = (0..2000)
        .map(|i| ManifestEntry {
            audio: PathBuf::from(format!("clip_{i}.wav")),
            singer: "s".into(),
            domain: Domain::Singing,
            features: None,
        })
        .collect();
    let m = Manifest { entries };
    let s = m.split(3);
    assert_eq!(s, m.split(3));
    assert_eq!(s.train.len() + s.valid.len() + s.test.len(), 2000);
    assert!((1700..1900).contains(&s.train.len()), "{}", s.train.len());
    assert!((50..150).contains(&s.valid.len()), "{}", s.valid.len());
    assert!((50..150).contains(&s.test.len()), "{}", s.test.len());
}

#[test]
fn seed_mixing_depends_on_order_and_values() {
    assert_ne!(mix(&[1, 2]), mix(&[2, 1]));
    assert_ne!(mix(&[0]), mix(&[0, 0]));
    assert_eq!(mix(&[7, 8, 9]), mix(&[7, 8, 9]));
}

#[test]
fn toy_clips_are_deterministic_and_pitched() {
    let spec = ToyCorpusSpec::default();
    let a = toy_clip(&spec, 1, 2);
    assert_eq!(a, toy_clip(&spec, 1, 2));
    assert_ne!(a, toy_clip(&spec, 0, 2));
    assert_eq!(a.len(), 24_000);
    let track = extract_f0(&a);
    assert!(track.voiced_count() as f64 > 0.7 * track.len() as f64);
    let lo = ToySinger::new(1).base_hz * 0.9;
    let hi = ToySinger::new(1).base_hz * 2.1;
    for (&f, &v) in track.f0_hz().iter().zip(track.voiced()) {
        if v {
            assert!((lo as f32..hi as f32).contains(&f), "{f}");
        }
    }
}
