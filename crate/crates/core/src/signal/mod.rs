//! Audio ingestion and the harmonic constant-Q front end.

mod audio;
mod hcqt;
mod tuning;

pub use audio::{load_audio, resample};
pub use hcqt::{compute_hcqt, HcqtParams, HcqtTensor};
pub use tuning::{estimate_tuning, TuningEstimate};

use crate::error::{invalid, Result};

pub const SAMPLE_RATE: u32 = 22050;
pub const HOP: usize = 512;
pub const BINS_PER_SEMITONE: usize = 3;
pub const BINS_PER_OCTAVE: usize = 36;
pub const N_BINS: usize = 216;
/// Channel order of the harmonic stack: the subharmonic first, then 1..=5.
pub const HARMONICS: [f64; 6] = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
pub const FRAME_RATE: f64 = SAMPLE_RATE as f64 / HOP as f64;
/// Frequency of C1 (MIDI 24) with A4 = 440 Hz.
pub const C1_HZ: f64 = 32.703_195_662_574_83;
/// Bin of the lowest CQT channel that is centred on C1. Each semitone owns
/// three bins and the middle one sits on the tempered pitch.
pub const C1_BIN: usize = 1;

/// Time of the centre of frame `k`. Frame `k` is centred on sample `k * HOP`.
pub fn frame_time(frame_index: i64) -> Result<f64> {
    if frame_index < 0 {
        return Err(invalid(format!("frame index must be non-negative, got {frame_index}")));
    }
    Ok(frame_index as f64 * HOP as f64 / SAMPLE_RATE as f64)
}

/// Number of frames for a signal of `n_samples` at the analysis rate.
pub fn frame_count(n_samples: usize) -> usize {
    n_samples / HOP + 1
}

/// Centre frequency of `bin` in the channel with harmonic factor `harmonic`.
pub fn bin_frequency(bin: usize, harmonic: f64, tuning_cents: f64) -> f64 {
    harmonic
        * C1_HZ
        * 2f64.powf(tuning_cents / 1200.0)
        * 2f64.powf((bin as f64 - C1_BIN as f64) / BINS_PER_OCTAVE as f64)
}

/// Centre bin of MIDI pitch `midi` in the fundamental channel.
pub fn pitch_center_bin(midi: u8) -> Option<usize> {
    let semis = (midi as usize).checked_sub(24)?;
    let bin = semis * BINS_PER_SEMITONE + C1_BIN;
    (bin < N_BINS).then_some(bin)
}

pub fn midi_to_hz(midi: f64) -> f64 {
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AudioTrack {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioTrack {
    /// Wraps mono samples. Rejects non-finite values.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Converts to the analysis rate if needed.
    pub fn to_analysis_rate(self) -> Result<Self> {
        if self.sample_rate == SAMPLE_RATE {
            return Ok(self);
        }
        let samples = resample(&self.samples, self.sample_rate, SAMPLE_RATE)?;
        Self::new(samples, SAMPLE_RATE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_times() {
        assert_eq!(frame_time(0).unwrap(), 0.0);
        assert!((frame_time(43).unwrap() - 0.998_458_049_886_621_3).abs() < 1e-12);
        assert!((frame_time(75).unwrap() - 1.741).abs() < 1e-3);
        assert!(frame_time(-1).is_err());
    }

    #[test]
    fn bin_grid() {
        assert_eq!(pitch_center_bin(24), Some(1));
        assert_eq!(pitch_center_bin(60), Some(109));
        assert_eq!(pitch_center_bin(95), Some(214));
        assert_eq!(pitch_center_bin(96), None);
        assert!((bin_frequency(109, 1.0, 0.0) - midi_to_hz(60.0)).abs() < 1e-9);
        assert!((bin_frequency(1, 0.5, 0.0) - C1_HZ / 2.0).abs() < 1e-12);
    }

    #[test]
    fn track_rejects_nan() {
        assert!(AudioTrack::new(vec![0.0, f32::NAN], 22050).is_err());
    }
}
