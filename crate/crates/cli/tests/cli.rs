use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hosid::corpus::{write_wav_pcm16, CorpusManifest, Gender, TalkingCondition, UtteranceRecord};

fn hosid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hosid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hosid(args);
    assert!(
        out.status.success(),
        "hosid {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str]) -> String {
    let out = hosid(args);
    assert!(!out.status.success(), "hosid {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_contents(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// A small synthetic corpus and a config that trains quickly.
struct Fixture {
    root: tempfile::TempDir,
}

impl Fixture {
    fn new(speakers: usize) -> Self {
        let root = tempfile::tempdir().unwrap();
        let spec = format!(
            r#"{{"num_speakers": {speakers}, "seed": 3, "feature_dim": 4, "frames_per_utterance": [20, 30],
                 "source": {{"speaker_mean_spread": 0.5}}}}"#
        );
        std::fs::write(root.path().join("spec.json"), spec).unwrap();
        std::fs::write(
            root.path().join("config.json"),
            r#"{"model": {"num_states": 2, "num_mixtures": 1}, "train": {"max_iters": 3}}"#,
        )
        .unwrap();
        let f = Self { root };
        ok(&["synth", "--spec", s(&f.path("spec.json")), "--out", s(&f.path("corpus"))]);
        f
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.path().join(rel)
    }

    fn enroll(&self, registry: &str, kind: &str) -> Output {
        hosid(&[
            "enroll",
            "--manifest",
            s(&self.path("corpus/manifest.jsonl")),
            "--features-dir",
            s(&self.path("corpus/features")),
            "--registry",
            s(&self.path(registry)),
            "--kind",
            kind,
            "--config",
            s(&self.path("config.json")),
        ])
    }

    fn identify(&self, registry: &str, out: &str) -> String {
        ok(&[
            "identify",
            "--manifest",
            s(&self.path("corpus/manifest.jsonl")),
            "--features-dir",
            s(&self.path("corpus/features")),
            "--registry",
            s(&self.path(registry)),
            "--out",
            s(&self.path(out)),
        ])
    }
}

#[test]
fn synth_counts_determinism_and_validation() {
    let f = Fixture::new(2);
    let manifest = std::fs::read_to_string(f.path("corpus/manifest.jsonl")).unwrap();
    let records = manifest.lines().filter(|l| l.contains("speaker_id")).count();
    assert_eq!(records, 864);
    assert_eq!(std::fs::read_dir(f.path("corpus/features")).unwrap().count(), 864);
    assert!(f.path("corpus/config.json").exists());
    assert!(f.path("corpus/provenance.json").exists());

    ok(&["synth", "--spec", s(&f.path("spec.json")), "--out", s(&f.path("again"))]);
    assert_eq!(dir_contents(&f.path("corpus")), dir_contents(&f.path("again")));

    std::fs::write(
        f.path("bad.json"),
        r#"{"num_speakers": 2, "stress_params": {
            "neutral": {"mean_shift": 0, "variance_scale": 1, "tempo_factor": 1},
            "shouted": {"mean_shift": 1, "variance_scale": 0, "tempo_factor": 1},
            "slow": {"mean_shift": 0, "variance_scale": 1, "tempo_factor": 1.5},
            "loud": {"mean_shift": 1, "variance_scale": 1, "tempo_factor": 1},
            "soft": {"mean_shift": 0, "variance_scale": 1, "tempo_factor": 1},
            "fast": {"mean_shift": 0, "variance_scale": 1, "tempo_factor": 0.6}}}"#,
    )
    .unwrap();
    let err = fail(&["synth", "--spec", s(&f.path("bad.json")), "--out", s(&f.path("bad"))]);
    assert!(err.contains("variance_scale"), "{err}");
    assert!(!f.path("bad/manifest.jsonl").exists());
}

#[test]
fn enroll_identify_evaluate() {
    let f = Fixture::new(2);
    for kind in ["hmm1", "hmm2", "hmm3"] {
        let out = f.enroll(kind, kind);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let models = std::fs::read_dir(f.path(kind))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".model.json"))
            .count();
        assert_eq!(models, 2);
        let traces = std::fs::read_to_string(f.path(&format!("{kind}/traces.csv"))).unwrap();
        assert!(traces.starts_with("# hosid "));
        assert!(traces.contains("spk01,0,"));
        f.identify(kind, &format!("{kind}.csv"));
    }

    // Kind homogeneity and idempotent reruns.
    assert!(!f.enroll("hmm1", "hmm2").status.success());
    assert!(f.enroll("hmm1", "hmm1").status.success());
    let index = std::fs::read_to_string(f.path("hmm1/registry.json")).unwrap();
    assert_eq!(index.matches("speaker_id").count(), 2);

    let results = std::fs::read_to_string(f.path("hmm1.csv")).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    assert!(lines[0].starts_with("# hosid ") && lines[0].contains("kind=hmm1"));
    assert_eq!(
        lines[1],
        "speaker_id,gender,sentence_index,condition,repetition,audio_path,sample_rate_hz,predicted_speaker,margin,correct"
    );
    for c in TalkingCondition::ALL {
        let rows = lines[2..].iter().filter(|l| l.split(',').nth(3) == Some(c.as_str())).count();
        assert_eq!(rows, 2 * 4 * 9, "{c}");
    }
    f.identify("hmm1", "hmm1_again.csv");
    assert_eq!(results, std::fs::read_to_string(f.path("hmm1_again.csv")).unwrap());

    let report = ok(&[
        "evaluate",
        s(&f.path("hmm1.csv")),
        s(&f.path("hmm2.csv")),
        s(&f.path("hmm3.csv")),
        "--out",
        s(&f.path("report")),
    ]);
    assert!(report.contains("## hmm3"));
    assert!(report.contains("| hmm3 vs hmm1 | all |"));
    assert!(report.contains("| hmm3 vs hmm2 | all |"));
    let csv = std::fs::read_to_string(f.path("report/report.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("hmm3 vs ")).count(), 2);
    assert!(f.path("report/config.json").exists());

    let single = ok(&["evaluate", s(&f.path("hmm2.csv")), "--out", s(&f.path("single"))]);
    assert!(!single.contains("Significance"));

    let same = ok(&[
        "evaluate",
        s(&f.path("hmm1.csv")),
        s(&f.path("hmm1_again.csv")),
        "--scope",
        "stressful",
        "--out",
        s(&f.path("same")),
    ]);
    assert!(same.contains("| hmm1 vs hmm1 | stressful |"), "{same}");
    let csv = std::fs::read_to_string(f.path("same/report.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("hmm1 vs hmm1")).unwrap();
    assert_eq!(row.split(',').nth(7), Some("0.000"));
}

#[test]
fn identify_rejects_other_feature_config() {
    let f = Fixture::new(2);
    assert!(f.enroll("reg", "gmm").status.success());
    let g = Fixture::new(2);
    std::fs::write(g.path("spec.json"), r#"{"num_speakers": 2, "feature_dim": 6, "frames_per_utterance": [20, 30]}"#)
        .unwrap();
    ok(&["synth", "--spec", s(&g.path("spec.json")), "--out", s(&g.path("corpus6"))]);
    let err = fail(&[
        "identify",
        "--manifest",
        s(&g.path("corpus6/manifest.jsonl")),
        "--features-dir",
        s(&g.path("corpus6/features")),
        "--registry",
        s(&f.path("reg")),
        "--out",
        s(&g.path("r.csv")),
    ]);
    assert!(err.contains("fingerprint"), "{err}");
}

fn audio_manifest(dir: &Path, audio: &str) -> PathBuf {
    let record = UtteranceRecord {
        speaker_id: "spk01".into(),
        gender: Gender::Female,
        sentence_index: 1,
        condition: TalkingCondition::Neutral,
        repetition: 1,
        audio_path: audio.into(),
        sample_rate_hz: 12_000,
    };
    let manifest = CorpusManifest::new(vec![record], BTreeMap::new()).unwrap();
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, manifest.to_jsonl()).unwrap();
    path
}

#[test]
fn features_from_audio() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<f64> = (0..12_000)
        .map(|i| 0.3 * (i as f64 * 0.07).sin() + 0.1 * (i as f64 * 0.31).sin())
        .collect();
    write_wav_pcm16(dir.path().join("a.wav"), &samples, 12_000).unwrap();
    let manifest = audio_manifest(dir.path(), "a.wav");
    let out = dir.path().join("feats");
    let stdout = ok(&["features", "--manifest", s(&manifest), "--out", s(&out)]);
    assert!(stdout.contains("processed 1 records, 72 frames"), "{stdout}");
    let file = out.join("spk01_s1_neutral_r1.feat");
    let seq = hosid::features::read_feature_file(&file).unwrap();
    assert_eq!((seq.num_frames(), seq.dim()), (72, 32));

    let first = std::fs::read(&file).unwrap();
    ok(&["features", "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(first, std::fs::read(&file).unwrap());

    let missing = audio_manifest(dir.path(), "missing.wav");
    let err = fail(&["features", "--manifest", s(&missing), "--out", s(&out)]);
    assert!(err.contains("missing.wav"), "{err}");
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"model": {"stats": 4}}"#).unwrap();
    let err = fail(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert!(err.contains("stats"), "{err}");

    std::fs::write(&cfg, r#"{"seed": 5, "model": {"num_states": 4}}"#).unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"num_speakers": 1, "feature_dim": 2, "frames_per_utterance": [5, 6]}"#).unwrap();
    let out = dir.path().join("y");
    ok(&["synth", "--spec", s(&spec), "--config", s(&cfg), "--states", "3", "--out", s(&out)]);
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["seed"], 5);
    assert_eq!(echoed["model"]["num_states"], 3);
}
