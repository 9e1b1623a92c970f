use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mpe::datasets::{choose_stride, FeatureCache, Manifest, PianoRoll, TrackRecord, N_PITCHES};
use mpe::evaluation::{evaluate_track, predict_track, EvalReport};
use mpe::models::{load_checkpoint, save_checkpoint, Model};
use mpe::signal::{HcqtParams, HcqtTensor, FRAME_RATE, HARMONICS, N_BINS};
use mpe::splits::{get_split, validate_split, SplitSpec};
use mpe::training::{train, PatchDataset, TrainHistory};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub written: Vec<String>,
    pub skipped: Vec<String>,
    /// Track id and error message.
    pub failed: Vec<(String, String)>,
}

/// Extracts features for every record, continuing past failures.
pub fn extract_features(manifest: &Manifest, cache: &FeatureCache, params: &HcqtParams) -> ExtractSummary {
    let mut summary = ExtractSummary::default();
    for r in manifest.records() {
        match cache.ensure(r, params) {
            Ok(true) => summary.written.push(r.track_id.clone()),
            Ok(false) => summary.skipped.push(r.track_id.clone()),
            Err(e) => {
                log::error!("{}: {e}", r.track_id);
                summary.failed.push((r.track_id.clone(), e.to_string()));
            }
        }
    }
    summary
}

/// Resolves a split and refuses to use it if validation finds violations.
pub fn checked_split(name: &str, manifest: &Manifest) -> Result<SplitSpec> {
    let spec = get_split(name, manifest)?;
    let report = validate_split(&spec, manifest);
    if !report.is_valid() {
        bail!("split {name} fails validation:\n{}", report.summary());
    }
    Ok(spec)
}

/// A test track with its features.
pub struct TestTrack {
    pub track_id: String,
    pub hcqt: HcqtTensor,
    pub roll: PianoRoll,
}

pub struct SplitData {
    pub train: PatchDataset,
    pub validation: PatchDataset,
    pub test: Vec<TestTrack>,
    pub train_stride: usize,
    pub validation_stride: usize,
}

fn records<'m>(manifest: &'m Manifest, ids: &std::collections::BTreeSet<String>) -> Vec<&'m TrackRecord> {
    ids.iter().filter_map(|id| manifest.get(id)).collect()
}

/// Keeps the leading `seconds` of a track.
fn truncate(hcqt: HcqtTensor, roll: PianoRoll, seconds: f64) -> mpe::Result<(HcqtTensor, PianoRoll)> {
    let keep = ((seconds * FRAME_RATE).ceil() as usize).min(hcqt.n_frames());
    if keep == hcqt.n_frames() {
        return Ok((hcqt, roll));
    }
    let n = hcqt.n_frames();
    let mut values = Vec::with_capacity(HARMONICS.len() * keep * N_BINS);
    for h in 0..HARMONICS.len() {
        values.extend_from_slice(&hcqt.values()[h * n * N_BINS..(h * n + keep) * N_BINS]);
    }
    let hcqt = HcqtTensor::from_values(values, keep, hcqt.tuning_offset(), hcqt.compression())?;
    let roll = PianoRoll::from_activity(roll.activity()[..keep * N_PITCHES].to_vec(), keep)?;
    Ok((hcqt, roll))
}

/// Loads cached features of a split into training, validation and test
/// sets. Strides are chosen to approach the configured patch targets.
pub fn load_split_data(cfg: &ExperimentConfig, manifest: &Manifest, spec: &SplitSpec) -> Result<SplitData> {
    let cache = FeatureCache::new(cfg.cache_dir());
    let load = |r: &TrackRecord| cache.load(&r.track_id).with_context(|| format!("features of {} (run extract-features first)", r.track_id));
    let train_recs = records(manifest, &spec.train);
    let val_recs = records(manifest, &spec.validation);
    if train_recs.is_empty() || val_recs.is_empty() || spec.test.is_empty() {
        bail!("split {} needs non-empty train, validation and test partitions", spec.name);
    }
    let train_tracks = train_recs.iter().map(|r| load(r)).collect::<Result<Vec<_>>>()?;
    let val_tracks = val_recs.iter().map(|r| load(r)).collect::<Result<Vec<_>>>()?;
    let frames = |t: &[(HcqtTensor, PianoRoll)]| t.iter().map(|(h, _)| h.n_frames()).collect::<Vec<_>>();
    let train_stride = choose_stride(cfg.sampling.train_patch_target, &frames(&train_tracks))?;
    let validation_stride = match cfg.sampling.validation_patch_target {
        Some(target) => choose_stride(target, &frames(&val_tracks))?,
        None => train_stride,
    };
    let mut train = PatchDataset::new();
    for (h, r) in train_tracks {
        train.add_track(h, r, train_stride)?;
    }
    let mut validation = PatchDataset::new();
    for (h, r) in val_tracks {
        validation.add_track(h, r, validation_stride)?;
    }
    let mut test = Vec::new();
    for r in records(manifest, &spec.test) {
        let (mut hcqt, mut roll) = load(r)?;
        if let Some(s) = spec.test_max_seconds {
            (hcqt, roll) = truncate(hcqt, roll, s)?;
        }
        test.push(TestTrack { track_id: r.track_id.clone(), hcqt, roll });
    }
    log::info!(
        "split {}: {} training patches (stride {train_stride}), {} validation patches (stride {validation_stride}), {} test tracks",
        spec.name,
        train.len(),
        validation.len(),
        test.len()
    );
    Ok(SplitData { train, validation, test, train_stride, validation_stride })
}

pub fn evaluate_model(
    cfg: &ExperimentConfig,
    model: &Model<f32>,
    test: &[TestTrack],
    seed: u64,
) -> Result<EvalReport> {
    let mut tracks = Vec::with_capacity(test.len());
    for t in test {
        let pred = predict_track(model, &t.track_id, &t.hcqt, cfg.evaluation.batch_size)?;
        tracks.push(evaluate_track(&pred, &t.roll, cfg.evaluation.threshold)?);
    }
    Ok(EvalReport {
        split: cfg.split.clone(),
        model: cfg.model.label()?,
        num_params: model.num_params(),
        seed,
        threshold: cfg.evaluation.threshold,
        tracks,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fingerprint {
    pub package_version: String,
    pub os: String,
    pub arch: String,
    pub available_parallelism: usize,
    pub effective_seed: u64,
    pub deterministic: bool,
}

pub const CONFIG_FILE: &str = "config.toml";
pub const HISTORY_FILE: &str = "history.json";
pub const BEST_CHECKPOINT: &str = "best.mpec";
pub const FINAL_CHECKPOINT: &str = "final.mpec";
pub const EVAL_FILE: &str = "eval.tsv";
pub const LOG_FILE: &str = "train.log";
pub const FINGERPRINT_FILE: &str = "environment.json";

/// Trains and evaluates one seed into `cfg.run_dir(seed)`.
///
/// The stored config pins the effective seed with determinism on, so
/// training it again reproduces the run (into a directory named after the
/// effective seed).
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, data: &SplitData) -> Result<(PathBuf, TrainHistory, EvalReport)> {
    let dir = cfg.run_dir(seed);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let model_config = cfg.model.resolve()?;
    let train_config = mpe::training::TrainConfig { seed, ..cfg.train.clone() };
    let start = Instant::now();
    let outcome = train(&model_config, &data.train, &data.validation, &train_config)?;
    let history = outcome.history;

    let mut snapshot = cfg.clone();
    snapshot.seeds = vec![history.effective_seed];
    snapshot.train.seed = history.effective_seed;
    snapshot.train.deterministic = true;
    snapshot.cache_dir = Some(std::path::absolute(cfg.cache_dir())?);
    snapshot.save(&dir.join(CONFIG_FILE))?;
    history.save(&dir.join(HISTORY_FILE))?;
    save_checkpoint(&outcome.model, &dir.join(BEST_CHECKPOINT))?;
    let mut last = outcome.model.clone();
    last.restore(outcome.final_params)?;
    save_checkpoint(&last, &dir.join(FINAL_CHECKPOINT))?;
    let mut log = String::new();
    for e in &history.epochs {
        log.push_str(&format!(
            "epoch {}\ttrain {:.6}\tvalidation {:.6}\tlr {:.3e}\t{:.1}s\n",
            e.epoch, e.train_loss, e.validation_loss, e.learning_rate, e.wall_seconds
        ));
    }
    log.push_str(&format!(
        "best epoch {}\tstopped early {}\ttotal {:.1}s\n",
        history.best_epoch,
        history.stopped_early,
        start.elapsed().as_secs_f64()
    ));
    fs::write(dir.join(LOG_FILE), log)?;
    let fp = Fingerprint {
        package_version: env!("CARGO_PKG_VERSION").into(),
        os: std::env::consts::OS.into(),
        arch: std::env::consts::ARCH.into(),
        available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        effective_seed: history.effective_seed,
        deterministic: cfg.train.deterministic,
    };
    fs::write(dir.join(FINGERPRINT_FILE), serde_json::to_string_pretty(&fp)?)?;

    let report = evaluate_model(cfg, &outcome.model, &data.test, seed)?;
    EvalReport::save_tsv(std::slice::from_ref(&report), &dir.join(EVAL_FILE))?;
    Ok((dir, history, report))
}

/// Outcome of one seed of [`train_experiment`].
pub struct SeedResult {
    pub seed: u64,
    pub result: Result<(PathBuf, TrainHistory, EvalReport)>,
}

/// Trains every configured seed; a failing seed does not stop the others.
pub fn train_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedResult>> {
    let manifest = Manifest::load(&cfg.manifest)?;
    let spec = checked_split(&cfg.split, &manifest)?;
    let data = load_split_data(cfg, &manifest, &spec)?;
    Ok(cfg
        .seeds
        .iter()
        .map(|&seed| {
            log::info!("{}: seed {seed}", cfg.name);
            let result = run_seed(cfg, seed, &data);
            if let Err(e) = &result {
                log::error!("{}: seed {seed} failed: {e:#}", cfg.name);
            }
            SeedResult { seed, result }
        })
        .collect())
}

/// Re-evaluates a run directory from its stored config and best checkpoint.
pub fn evaluate_run(run_dir: &Path) -> Result<EvalReport> {
    let cfg = ExperimentConfig::load(&run_dir.join(CONFIG_FILE))?;
    let model: Model<f32> = load_checkpoint(&run_dir.join(BEST_CHECKPOINT))?;
    let manifest = Manifest::load(&cfg.manifest)?;
    let spec = checked_split(&cfg.split, &manifest)?;
    let cache = FeatureCache::new(cfg.cache_dir());
    let mut test = Vec::new();
    for r in records(&manifest, &spec.test) {
        let (mut hcqt, mut roll) = cache.load(&r.track_id)?;
        if let Some(s) = spec.test_max_seconds {
            (hcqt, roll) = truncate(hcqt, roll, s)?;
        }
        test.push(TestTrack { track_id: r.track_id.clone(), hcqt, roll });
    }
    let seed = TrainHistory::load(&run_dir.join(HISTORY_FILE))?.seed;
    let report = evaluate_model(&cfg, &model, &test, seed)?;
    EvalReport::save_tsv(std::slice::from_ref(&report), &run_dir.join(EVAL_FILE))?;
    Ok(report)
}
