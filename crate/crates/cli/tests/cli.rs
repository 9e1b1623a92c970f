use std::path::Path;
use std::process::Command;

use mpe::datasets::SynthConfig;
use mpe::evaluation::{EvalReport, TrackMetrics};
use mpe::models::Family;
use mpe_cli::report::{check_compatible, render_markdown, table_rows};
use mpe_cli::{ExperimentConfig, ModelSpec};

fn mpe(args: &[&str]) -> std::process::Output {
    mpe_in(Path::new("."), args)
}

fn mpe_in(cwd: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mpe")).current_dir(cwd).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn track(id: &str, ap: f64) -> TrackMetrics {
    TrackMetrics {
        track_id: id.into(),
        frames: 100,
        precision: 80.04,
        recall: 70.06,
        f_measure: 74.72,
        average_precision: Some(ap),
        accuracy: 60.0,
    }
}

fn report(model: &str, params: usize, seed: u64, ap: f64) -> EvalReport {
    EvalReport {
        split: "MuN-10a".into(),
        model: model.into(),
        num_params: params,
        seed,
        threshold: 0.4,
        tracks: vec![track("a", ap), track("b", ap + 2.0)],
    }
}

#[test]
fn config_roundtrip_resolves_paths_against_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        name: "x".into(),
        manifest: "data/manifest.jsonl".into(),
        seeds: vec![3, 4],
        model: ModelSpec { preset: Some("CNN:S".into()), dropout: Some(0.0), ..ModelSpec::default() },
        ..ExperimentConfig::default()
    };
    let path = dir.path().join("exp.toml");
    cfg.save(&path).unwrap();
    let back = ExperimentConfig::load(&path).unwrap();
    let base = std::path::absolute(dir.path()).unwrap();
    assert_eq!(back.manifest, base.join("data/manifest.jsonl"));
    assert_eq!(back.output_dir, base.join("runs"));
    assert_eq!(back.cache_dir(), base.join("data/cache"));
    assert_eq!(back.run_dir(4), base.join("runs/x/seed-4"));
    assert_eq!(back.model, cfg.model);
    assert_eq!(back.train, cfg.train);
}

#[test]
fn config_rejects_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    for text in ["split = \"nope\"", "seeds = []", "unknown_key = 1", "[model]\npreset = \"CNN:XXL\""] {
        std::fs::write(&path, text).unwrap();
        assert!(ExperimentConfig::load(&path).is_err(), "{text}");
    }
}

#[test]
fn model_labels() {
    assert_eq!(ModelSpec::from_preset("CNN:M").label().unwrap(), "CNN:M");
    let custom = ModelSpec {
        family: Some(Family::SaUnet),
        channels: Some([8, 8, 8, 8]),
        gamma: Some(2),
        lambda: Some(16),
        ..ModelSpec::default()
    };
    assert_eq!(custom.label().unwrap(), "SAUnet:8-8-8-8-g2-l16");
    let tweaked = ModelSpec { dropout: Some(0.0), ..ModelSpec::from_preset("CNN:M") };
    assert!(tweaked.label().unwrap().starts_with("CNN:"));
    assert!(ModelSpec::default().resolve().is_err());
}

#[test]
fn table_rounds_to_one_decimal() {
    let rows = table_rows(&[report("CNN:M", 1000, 0, 90.0)]).unwrap();
    assert_eq!(rows[0].family, "CNN");
    assert_eq!(rows[0].size, "M");
    assert!((rows[0].average_precision.unwrap() - 91.0).abs() < 1e-12);
    let md = render_markdown(&rows);
    assert!(md.contains("| CNN | M | 1000 | MuN-10a | 0 | 80.0 | 70.1 | 74.7 | 91.0 | 60.0 |"), "{md}");
}

#[test]
fn incompatible_reports_are_rejected() {
    assert!(check_compatible(&[report("CNN:M", 1000, 0, 90.0), report("CNN:M", 1000, 1, 91.0)]).is_ok());
    assert!(check_compatible(&[report("CNN:M", 1000, 0, 90.0), report("CNN:M", 1001, 1, 91.0)]).is_err());
    let mut other = report("CNN:L", 5000, 0, 90.0);
    other.threshold = 0.5;
    assert!(check_compatible(&[report("CNN:M", 1000, 0, 90.0), other]).is_err());
}

#[test]
fn default_config_parses() {
    let out = mpe(&["default-config"]);
    assert!(out.status.success());
    let cfg: ExperimentConfig = toml::from_str(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn exit_code_two_on_unusable_input() {
    let out = mpe(&["train", "--config", "/nonexistent/exp.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

fn write_small_experiment(dir: &Path) -> std::path::PathBuf {
    let cfg = ExperimentConfig {
        name: "smoke".into(),
        manifest: "corpus/manifest.jsonl".into(),
        split: "tags".into(),
        seeds: vec![5],
        output_dir: "runs".into(),
        model: ModelSpec {
            family: Some(Family::Cnn),
            channels: Some([2, 3, 2, 2]),
            ..ModelSpec::default()
        },
        train: mpe::training::TrainConfig {
            batch_size: 4,
            batches_per_epoch: 2,
            max_epochs: 2,
            ..Default::default()
        },
        ..ExperimentConfig::default()
    };
    let path = dir.join("exp.toml");
    cfg.save(&path).unwrap();
    path
}

#[test]
fn pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out = mpe_in(dir.path(), &["synth-corpus", "--out", "corpus", "--train", "2", "--validation", "1", "--test", "1", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let synth: SynthConfig = toml::from_str(&std::fs::read_to_string(corpus.join("synth.toml")).unwrap()).unwrap();
    assert_eq!(synth.seed, 3);

    let manifest = corpus.join("manifest.jsonl");
    let out = mpe_in(dir.path(), &["extract-features", "--manifest", "corpus/manifest.jsonl"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("4 written"));
    let again = mpe(&["extract-features", "--manifest", manifest.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&again.stdout).contains("4 up to date"));

    // Published splits cannot resolve against a synthetic manifest.
    let splits = dir.path().join("splits");
    let out = mpe(&["make-splits", "--manifest", manifest.to_str().unwrap(), "--out", splits.to_str().unwrap(), "--split", "MuN-10"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(std::fs::read_to_string(splits.join("errors.json")).unwrap().contains("MuN-10"));

    write_small_experiment(dir.path());
    let out = mpe_in(dir.path(), &["train", "--config", "exp.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("runs/smoke/seed-5");
    for f in ["config.toml", "history.json", "best.mpec", "final.mpec", "eval.tsv", "train.log", "environment.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let first = std::fs::read_to_string(run.join("eval.tsv")).unwrap();
    let out = mpe(&["evaluate", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(run.join("eval.tsv")).unwrap(), first);

    // The stored config reproduces the run.
    let replay = ExperimentConfig::load(&run.join("config.toml")).unwrap();
    assert_eq!(replay.seeds, vec![5]);
    let out = mpe(&["train", "--config", run.join("config.toml").to_str().unwrap(), "--name", "replay"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let replayed = dir.path().join("runs/replay/seed-5/eval.tsv");
    assert_eq!(std::fs::read_to_string(replayed).unwrap(), first);

    let report_dir = dir.path().join("report");
    let out = mpe(&["report", run.to_str().unwrap(), "--out", report_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["table.tsv", "table.md", "variance.tsv", "scatter.svg", "scatter.tsv", "per_track.svg", "splits.svg"] {
        assert!(report_dir.join(f).is_file(), "{f}");
    }
}
