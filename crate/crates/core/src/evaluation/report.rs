use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{aggregate, MacroMetrics, TrackMetrics};
use crate::error::{invalid, Error, Result};

/// Per-track metrics of one trained model on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    /// Configuration label, e.g. `CNN:M`.
    pub model: String,
    pub num_params: usize,
    pub seed: u64,
    pub threshold: f32,
    pub tracks: Vec<TrackMetrics>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    split: String,
    model: String,
    num_params: usize,
    seed: u64,
    threshold: f32,
    track_id: String,
    frames: usize,
    precision: f64,
    recall: f64,
    f_measure: f64,
    average_precision: Option<f64>,
    accuracy: f64,
}

impl EvalReport {
    pub fn macro_metrics(&self) -> Result<MacroMetrics> {
        aggregate(&self.tracks)
    }

    fn rows(&self) -> impl Iterator<Item = Row> + '_ {
        self.tracks.iter().map(|t| Row {
            split: self.split.clone(),
            model: self.model.clone(),
            num_params: self.num_params,
            seed: self.seed,
            threshold: self.threshold,
            track_id: t.track_id.clone(),
            frames: t.frames,
            precision: t.precision,
            recall: t.recall,
            f_measure: t.f_measure,
            average_precision: t.average_precision,
            accuracy: t.accuracy,
        })
    }

    /// Writes reports as one tab-separated table, one row per track and run.
    pub fn save_tsv(reports: &[EvalReport], path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_path(path).map_err(|e| Error::format("report", e))?;
        for row in reports.iter().flat_map(|r| r.rows()) {
            w.serialize(row).map_err(|e| Error::format("report", e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a table written by [`EvalReport::save_tsv`], regrouping rows
    /// into reports in order of first appearance.
    pub fn load_tsv(path: &Path) -> Result<Vec<EvalReport>> {
        let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_path(path).map_err(|e| Error::format(path.display().to_string(), e))?;
        let mut reports: Vec<EvalReport> = Vec::new();
        for row in r.deserialize::<Row>() {
            let row = row.map_err(|e| Error::format(path.display().to_string(), e))?;
            let track = TrackMetrics {
                track_id: row.track_id,
                frames: row.frames,
                precision: row.precision,
                recall: row.recall,
                f_measure: row.f_measure,
                average_precision: row.average_precision,
                accuracy: row.accuracy,
            };
            match reports.iter_mut().find(|e| e.split == row.split && e.model == row.model && e.seed == row.seed) {
                Some(e) => e.tracks.push(track),
                None => reports.push(EvalReport {
                    split: row.split,
                    model: row.model,
                    num_params: row.num_params,
                    seed: row.seed,
                    threshold: row.threshold,
                    tracks: vec![track],
                }),
            }
        }
        Ok(reports)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSpread {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// `max - min`.
    pub spread: f64,
}

impl MetricSpread {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Some(Self { min, max, mean, spread: max - min })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSpread {
    pub track_id: String,
    /// One value per run, in run order.
    pub average_precision: Vec<Option<f64>>,
    pub f_measure: Vec<f64>,
    pub ap: Option<MetricSpread>,
    pub f: MetricSpread,
}

/// One point of the parameters-versus-AP scatter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub model: String,
    pub num_params: usize,
    pub seed: u64,
    pub average_precision: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceSummary {
    pub split: String,
    pub model: String,
    pub num_params: usize,
    pub seeds: Vec<u64>,
    pub precision: MetricSpread,
    pub recall: MetricSpread,
    pub f_measure: MetricSpread,
    pub average_precision: Option<MetricSpread>,
    pub accuracy: MetricSpread,
    pub tracks: Vec<TrackSpread>,
    pub scatter: Vec<ScatterPoint>,
}

/// Spread of metrics across runs of one configuration on one split.
pub fn variance_report(runs: &[EvalReport]) -> Result<VarianceSummary> {
    let [first, rest @ ..] = runs else {
        return Err(invalid("variance needs at least two runs"));
    };
    if rest.is_empty() {
        return Err(invalid("variance needs at least two runs"));
    }
    for r in rest {
        if (&r.split, &r.model, r.num_params) != (&first.split, &first.model, first.num_params) {
            return Err(invalid(format!(
                "runs differ: {} {} ({} params) vs {} {} ({} params)",
                first.model, first.split, first.num_params, r.model, r.split, r.num_params
            )));
        }
        let ids = |e: &EvalReport| e.tracks.iter().map(|t| t.track_id.clone()).collect::<std::collections::BTreeSet<_>>();
        if ids(r) != ids(first) {
            return Err(invalid(format!("runs with seeds {} and {} cover different tracks", first.seed, r.seed)));
        }
    }
    let macros = runs.iter().map(EvalReport::macro_metrics).collect::<Result<Vec<_>>>()?;
    let spread = |f: fn(&MacroMetrics) -> f64| MetricSpread::of(&macros.iter().map(f).collect::<Vec<_>>()).expect("non-empty");
    let aps: Vec<f64> = macros.iter().filter_map(|m| m.average_precision).collect();

    let mut per_track: BTreeMap<&str, (Vec<Option<f64>>, Vec<f64>)> = BTreeMap::new();
    for run in runs {
        for t in &run.tracks {
            let e = per_track.entry(&t.track_id).or_default();
            e.0.push(t.average_precision);
            e.1.push(t.f_measure);
        }
    }
    let tracks = per_track
        .into_iter()
        .map(|(id, (ap, f))| TrackSpread {
            track_id: id.to_string(),
            ap: MetricSpread::of(&ap.iter().flatten().copied().collect::<Vec<_>>()),
            f: MetricSpread::of(&f).expect("non-empty"),
            average_precision: ap,
            f_measure: f,
        })
        .collect();
    let scatter = runs
        .iter()
        .zip(&macros)
        .filter_map(|(r, m)| {
            m.average_precision.map(|ap| ScatterPoint {
                model: r.model.clone(),
                num_params: r.num_params,
                seed: r.seed,
                average_precision: ap,
            })
        })
        .collect();
    Ok(VarianceSummary {
        split: first.split.clone(),
        model: first.model.clone(),
        num_params: first.num_params,
        seeds: runs.iter().map(|r| r.seed).collect(),
        precision: spread(|m| m.precision),
        recall: spread(|m| m.recall),
        f_measure: spread(|m| m.f_measure),
        average_precision: MetricSpread::of(&aps),
        accuracy: spread(|m| m.accuracy),
        tracks,
        scatter,
    })
}
