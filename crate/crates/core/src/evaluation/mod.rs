//! Dense prediction, frame-level metrics, macro aggregation and seed
//! variance.

mod metrics;
mod report;

use autograd::{Float, Tensor};
use serde::{Deserialize, Serialize};

use crate::datasets::patches::copy_window;
use crate::datasets::{PianoRoll, N_PITCHES, PATCH_FRAMES, PATCH_LEN};
use crate::error::{invalid, Error, Result};
use crate::models::Model;
use crate::signal::{HcqtTensor, HARMONICS, N_BINS};

pub use metrics::{accuracy_score, average_precision, frame_metrics, Counts, FrameMetrics, DEFAULT_THRESHOLD};
pub use report::{variance_report, EvalReport, MetricSpread, ScatterPoint, TrackSpread, VarianceSummary};

/// Frame-wise pitch activations of one track, `[frames, 72]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackPrediction {
    pub track_id: String,
    pub activations: Vec<f32>,
}

impl TrackPrediction {
    pub fn n_frames(&self) -> usize {
        self.activations.len() / N_PITCHES
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.activations[frame * N_PITCHES..(frame + 1) * N_PITCHES]
    }
}

/// Predicts every frame of a track. Frames closer than the context width to
/// either end see the edge frame repeated.
pub fn predict_track<F: Float>(
    model: &Model<F>,
    track_id: &str,
    hcqt: &HcqtTensor,
    batch_size: usize,
) -> Result<TrackPrediction> {
    let n = hcqt.n_frames();
    if n < PATCH_FRAMES {
        return Err(invalid(format!("track {track_id} has {n} frames, at least {PATCH_FRAMES} needed")));
    }
    let batch_size = batch_size.max(1);
    let mut activations = Vec::with_capacity(n * N_PITCHES);
    let mut window = vec![0f32; PATCH_LEN];
    for start in (0..n).step_by(batch_size) {
        let end = (start + batch_size).min(n);
        let mut data = Vec::with_capacity((end - start) * PATCH_LEN);
        for center in start..end {
            copy_window(hcqt, center, &mut window);
            data.extend(window.iter().map(|&v| F::of(v as f64)));
        }
        let input = Tensor::from_vec(&[end - start, HARMONICS.len(), PATCH_FRAMES, N_BINS], data);
        activations.extend(model.predict(&input)?.pitch_activity);
    }
    Ok(TrackPrediction { track_id: track_id.to_string(), activations })
}

/// Micro-averaged metrics of one track, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackMetrics {
    pub track_id: String,
    pub frames: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Absent when the track has no active cells.
    pub average_precision: Option<f64>,
    pub accuracy: f64,
}

pub fn evaluate_track(pred: &TrackPrediction, target: &PianoRoll, threshold: f32) -> Result<TrackMetrics> {
    if pred.n_frames() != target.n_frames() {
        return Err(Error::Shape { expected: vec![target.n_frames(), N_PITCHES], actual: vec![pred.n_frames(), N_PITCHES] });
    }
    let c = Counts::tally(&pred.activations, target.activity(), threshold)?;
    Ok(TrackMetrics {
        track_id: pred.track_id.clone(),
        frames: pred.n_frames(),
        precision: c.precision(),
        recall: c.recall(),
        f_measure: c.f_measure(),
        average_precision: average_precision(&pred.activations, target.activity())?,
        accuracy: c.accuracy(),
    })
}

/// Unweighted means over tracks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub tracks: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Mean over tracks with a defined AP; `None` if there are none.
    pub average_precision: Option<f64>,
    pub accuracy: f64,
    /// Tracks left out of the AP mean because they have no active cells.
    pub ap_excluded: Vec<String>,
}

pub fn aggregate(tracks: &[TrackMetrics]) -> Result<MacroMetrics> {
    if tracks.is_empty() {
        return Err(invalid("cannot aggregate an empty set of tracks"));
    }
    let mean = |f: fn(&TrackMetrics) -> f64| tracks.iter().map(f).sum::<f64>() / tracks.len() as f64;
    let aps: Vec<f64> = tracks.iter().filter_map(|t| t.average_precision).collect();
    let ap_excluded: Vec<String> =
        tracks.iter().filter(|t| t.average_precision.is_none()).map(|t| t.track_id.clone()).collect();
    if !ap_excluded.is_empty() {
        log::warn!("AP undefined for {} silent track(s), excluded from the mean: {}", ap_excluded.len(), ap_excluded.join(", "));
    }
    Ok(MacroMetrics {
        tracks: tracks.len(),
        precision: mean(|t| t.precision),
        recall: mean(|t| t.recall),
        f_measure: mean(|t| t.f_measure),
        average_precision: (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64),
        accuracy: mean(|t| t.accuracy),
        ap_excluded,
    })
}
