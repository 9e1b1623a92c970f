//! Synthetic corpora: random note sequences rendered as harmonic sinusoid
//! mixtures, with exact note tables.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetId, Manifest, NoteEvent, TrackRecord};
use crate::error::{invalid, Error, Result};
use crate::signal::{AudioTrack, SAMPLE_RATE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub train_tracks: usize,
    pub validation_tracks: usize,
    pub test_tracks: usize,
    pub duration_seconds: f64,
    /// Upper bound on simultaneously sounding notes.
    pub max_polyphony: usize,
    pub lowest_midi: u8,
    pub highest_midi: u8,
    pub min_note_seconds: f64,
    pub max_note_seconds: f64,
    pub max_partials: usize,
    /// Standard deviation of additive white noise relative to full scale.
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_tracks: 40,
            validation_tracks: 10,
            test_tracks: 10,
            duration_seconds: 3.5,
            max_polyphony: 6,
            lowest_midi: 36,
            highest_midi: 84,
            min_note_seconds: 0.25,
            max_note_seconds: 1.2,
            max_partials: 8,
            noise_level: 1e-3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_tracks + self.validation_tracks + self.test_tracks == 0 {
            return Err(invalid("the corpus needs at least one track"));
        }
        if self.max_polyphony == 0 || self.max_partials == 0 {
            return Err(invalid("max_polyphony and max_partials must be positive"));
        }
        if !(self.lowest_midi >= 24 && self.lowest_midi <= self.highest_midi && self.highest_midi <= 95) {
            return Err(invalid("pitch range must lie within MIDI 24..=95"));
        }
        if !(self.min_note_seconds > 0.0 && self.min_note_seconds <= self.max_note_seconds) {
            return Err(invalid("note durations must satisfy 0 < min <= max"));
        }
        if !(self.duration_seconds > self.min_note_seconds && self.noise_level >= 0.0) {
            return Err(invalid("track duration must exceed the shortest note"));
        }
        Ok(())
    }
}

/// A rendered track with its notes.
#[derive(Clone, Debug)]
pub struct SynthTrack {
    pub audio: AudioTrack,
    pub notes: Vec<NoteEvent>,
}

/// Notes laid out on `voices` independent lines with random rests, so that
/// at most `voices` notes sound at once. A voice never repeats a pitch that
/// another voice is holding.
fn compose(cfg: &SynthConfig, voices: usize, rng: &mut impl Rng) -> Vec<NoteEvent> {
    let mut notes: Vec<NoteEvent> = Vec::new();
    for _ in 0..voices {
        let mut t = rng.random_range(0.0..0.4);
        while t + cfg.min_note_seconds < cfg.duration_seconds {
            let len = rng.random_range(cfg.min_note_seconds..=cfg.max_note_seconds);
            let end = (t + len).min(cfg.duration_seconds);
            let busy: BTreeSet<u8> =
                notes.iter().filter(|n| n.onset < end && t < n.offset).map(|n| n.pitch).collect();
            let free: Vec<u8> = (cfg.lowest_midi..=cfg.highest_midi).filter(|p| !busy.contains(p)).collect();
            if let Some(&pitch) = free.get(rng.random_range(0..free.len().max(1))) {
                notes.push(NoteEvent { onset: t, offset: end, pitch });
            }
            t = end + rng.random_range(0.0..0.3);
        }
    }
    notes.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
    notes
}

fn render(cfg: &SynthConfig, notes: &[NoteEvent], rng: &mut impl Rng) -> Vec<f32> {
    let sr = SAMPLE_RATE as f64;
    let n = (cfg.duration_seconds * sr).round() as usize;
    let mut out = vec![0f64; n];
    let ramp = 0.01 * sr;
    for note in notes {
        let f0 = 440.0 * 2f64.powf((note.pitch as f64 - 69.0) / 12.0);
        let gain = rng.random_range(0.4..1.0);
        let rolloff = rng.random_range(0.6..1.4);
        let partials: Vec<(f64, f64, f64)> = (1..=cfg.max_partials)
            .filter(|&k| (k as f64) * f0 < 0.45 * sr)
            .map(|k| (k as f64 * f0, gain / (k as f64).powf(rolloff), rng.random_range(0.0..TAU)))
            .collect();
        let start = (note.onset * sr).round() as usize;
        let stop = ((note.offset * sr).round() as usize).min(n);
        let len = (stop - start) as f64;
        for (i, s) in out[start..stop].iter_mut().enumerate() {
            let i = i as f64;
            let env = (i / ramp).min(1.0) * ((len - i) / ramp).min(1.0);
            let t = i / sr;
            *s += env * partials.iter().map(|&(f, a, ph)| a * (TAU * f * t + ph).sin()).sum::<f64>();
        }
    }
    let peak = out.iter().fold(0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 0.8 / peak } else { 1.0 };
    out.iter()
        .map(|&v| {
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            (v * scale + cfg.noise_level * noise) as f32
        })
        .collect()
}

/// Renders one track; polyphony is drawn uniformly from `1..=max_polyphony`.
pub fn synth_track(cfg: &SynthConfig, rng: &mut impl Rng) -> Result<SynthTrack> {
    cfg.validate()?;
    let voices = rng.random_range(1..=cfg.max_polyphony);
    let notes = compose(cfg, voices, rng);
    let samples = render(cfg, &notes, rng);
    Ok(SynthTrack { audio: AudioTrack::new(samples, SAMPLE_RATE)?, notes })
}

/// Largest number of notes sounding at any instant.
pub fn max_simultaneous(notes: &[NoteEvent]) -> usize {
    notes
        .iter()
        .map(|a| notes.iter().filter(|b| b.onset <= a.onset && a.onset < b.offset).count())
        .max()
        .unwrap_or(0)
}

/// Writes `audio/<id>.wav`, `notes/<id>.csv` and `manifest.jsonl` under
/// `dir`. Tracks are tagged `train`, `validation` or `test` in that order.
pub fn write_corpus(dir: &Path, cfg: &SynthConfig) -> Result<Manifest> {
    cfg.validate()?;
    let audio_dir = dir.join("audio");
    let notes_dir = dir.join("notes");
    for d in [&audio_dir, &notes_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = cfg.train_tracks + cfg.validation_tracks + cfg.test_tracks;
    let mut records = Vec::with_capacity(total);
    for i in 0..total {
        let tag = if i < cfg.train_tracks {
            "train"
        } else if i < cfg.train_tracks + cfg.validation_tracks {
            "validation"
        } else {
            "test"
        };
        let id = format!("syn-{i:03}");
        let track = synth_track(cfg, &mut rng)?;
        let audio_path = audio_dir.join(format!("{id}.wav"));
        write_wav(&audio_path, track.audio.samples())?;
        let annotation_path = notes_dir.join(format!("{id}.csv"));
        let mut table = String::from("onset_sec,offset_sec,midi_pitch\n");
        for n in &track.notes {
            table.push_str(&format!("{:.6},{:.6},{}\n", n.onset, n.offset, n.pitch));
        }
        fs::write(&annotation_path, table).map_err(|e| Error::io(&annotation_path, e))?;
        records.push(TrackRecord {
            track_id: id.clone(),
            dataset_id: DatasetId::Syn,
            audio_path: Path::new("audio").join(format!("{id}.wav")),
            annotation_path: Path::new("notes").join(format!("{id}.csv")),
            cycle_id: String::new(),
            version_id: String::new(),
            movement_label: String::new(),
            split_tags: BTreeSet::from([tag.to_string()]),
        });
    }
    // Stored paths are relative to the manifest; loading resolves them.
    let path = dir.join("manifest.jsonl");
    Manifest::new(records)?.save(&path)?;
    Manifest::load(&path)
}

fn write_wav(path: &Path, samples: &[f32]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let fail = |e: hound::Error| Error::Audio { path: path.into(), reason: e.to_string() };
    let mut w = hound::WavWriter::create(path, spec).map_err(fail)?;
    for &s in samples {
        w.write_sample(s).map_err(fail)?;
    }
    w.finalize().map_err(fail)
}
