//! Per-track feature extraction and the on-disk feature cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use super::{load_notes, AnnotationFormat, PianoRoll, TrackRecord};
use crate::error::{Error, Result};
use crate::signal::{compute_hcqt, estimate_tuning, load_audio, HcqtParams, HcqtTensor};

/// Loads audio and notes of a record and computes the tuned HCQT and the
/// frame-aligned piano roll.
pub fn extract_track(record: &TrackRecord, params: &HcqtParams) -> Result<(HcqtTensor, PianoRoll)> {
    let audio = load_audio(&record.audio_path)?;
    let tuning = estimate_tuning(&audio);
    let hcqt = compute_hcqt(&audio, tuning.cents, params)?;
    let notes = load_notes(&record.annotation_path, AnnotationFormat::for_dataset(record.dataset_id))?;
    let (roll, dropped) = PianoRoll::rasterize(&notes, hcqt.n_frames())?;
    if dropped > 0 {
        log::debug!("{}: {dropped} notes outside the pitch range", record.track_id);
    }
    Ok((hcqt, roll))
}

/// `<root>/hcqt/<id>.mpec` and `<root>/roll/<id>.mpec`.
#[derive(Clone, Debug)]
pub struct FeatureCache {
    root: PathBuf,
}

impl FeatureCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn hcqt_path(&self, track_id: &str) -> PathBuf {
        self.root.join("hcqt").join(format!("{track_id}.mpec"))
    }

    pub fn roll_path(&self, track_id: &str) -> PathBuf {
        self.root.join("roll").join(format!("{track_id}.mpec"))
    }

    /// True when both cache files exist and are newer than the sources.
    pub fn is_fresh(&self, record: &TrackRecord) -> bool {
        let modified = |p: &Path| fs::metadata(p).and_then(|m| m.modified()).ok();
        let newest_source = [&record.audio_path, &record.annotation_path]
            .into_iter()
            .map(|p| modified(p).unwrap_or(SystemTime::UNIX_EPOCH))
            .max()
            .unwrap_or(SystemTime::UNIX_EPOCH);
        [self.hcqt_path(&record.track_id), self.roll_path(&record.track_id)]
            .iter()
            .all(|p| modified(p).is_some_and(|t| t >= newest_source))
    }

    /// Extracts the track unless its cache is fresh. Returns whether files
    /// were written.
    pub fn ensure(&self, record: &TrackRecord, params: &HcqtParams) -> Result<bool> {
        if self.is_fresh(record) {
            return Ok(false);
        }
        let (hcqt, roll) = extract_track(record, params)?;
        for dir in ["hcqt", "roll"] {
            let d = self.root.join(dir);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        hcqt.save(&self.hcqt_path(&record.track_id))?;
        roll.save(&self.roll_path(&record.track_id))?;
        Ok(true)
    }

    pub fn load(&self, track_id: &str) -> Result<(HcqtTensor, PianoRoll)> {
        Ok((HcqtTensor::load(&self.hcqt_path(track_id))?, PianoRoll::load(&self.roll_path(track_id))?))
    }
}
