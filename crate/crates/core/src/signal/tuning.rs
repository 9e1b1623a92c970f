use std::f64::consts::PI;

use realfft::RealFftPlanner;

use super::AudioTrack;

const WINDOW: usize = 8192;
const STEP: usize = 4096;
const MIN_HZ: f64 = 50.0;
const MAX_HZ: f64 = 5000.0;
/// Peaks weaker than this fraction of the frame maximum are ignored.
const REL_FLOOR: f64 = 0.01;
const SILENCE: f32 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuningEstimate {
    /// Deviation from the A440 semitone grid, in `[-50, 50)` cents.
    pub cents: f64,
    /// Set when the input carried no usable spectral peaks; `cents` is 0.
    pub silent: bool,
}

/// Estimates the global tuning offset from spectral peaks.
///
/// Every local maximum of a Hann-windowed magnitude spectrum is refined by
/// parabolic interpolation on the log magnitude, mapped to its deviation from
/// the nearest tempered semitone and accumulated as a unit phasor with period
/// 100 cents, weighted by magnitude. The angle of the sum is the estimate.
pub fn estimate_tuning(track: &AudioTrack) -> TuningEstimate {
    let x = track.samples();
    let rate = track.sample_rate() as f64;
    if x.iter().all(|v| v.abs() < SILENCE) {
        log::warn!("tuning estimation on a silent track; assuming 0 cents");
        return TuningEstimate { cents: 0.0, silent: true };
    }
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(WINDOW);
    let window: Vec<f64> = (0..WINDOW).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / WINDOW as f64).cos()).collect();
    let mut buf = fft.make_input_vec();
    let mut spec = fft.make_output_vec();
    let mut mag = vec![0.0; spec.len()];
    let (mut re, mut im) = (0.0, 0.0);
    let lo = ((MIN_HZ * WINDOW as f64 / rate).floor() as usize).max(1);
    let hi = ((MAX_HZ * WINDOW as f64 / rate).ceil() as usize).min(spec.len() - 2);

    let mut start = 0;
    loop {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = x.get(start + i).map_or(0.0, |&v| v as f64) * window[i];
        }
        fft.process(&mut buf, &mut spec).expect("fft sizes are fixed");
        for (m, c) in mag.iter_mut().zip(&spec) {
            *m = c.norm();
        }
        let peak = mag[lo..=hi].iter().fold(0f64, |a, &b| a.max(b));
        if peak > 0.0 {
            for k in lo..=hi {
                let m = mag[k];
                if m < REL_FLOOR * peak || m <= mag[k - 1] || m < mag[k + 1] {
                    continue;
                }
                let (a, b, c) = (mag[k - 1].max(1e-300).ln(), m.ln(), mag[k + 1].max(1e-300).ln());
                let denom = a - 2.0 * b + c;
                let delta = if denom.abs() > 1e-12 { 0.5 * (a - c) / denom } else { 0.0 };
                let freq = (k as f64 + delta) * rate / WINDOW as f64;
                let cents = 1200.0 * (freq / 440.0).log2();
                let phase = 2.0 * PI * cents / 100.0;
                re += m * phase.cos();
                im += m * phase.sin();
            }
        }
        start += STEP;
        if start + WINDOW > x.len() + STEP {
            break;
        }
    }
    if re == 0.0 && im == 0.0 {
        log::warn!("no spectral peaks found for tuning estimation; assuming 0 cents");
        return TuningEstimate { cents: 0.0, silent: true };
    }
    let mut cents = im.atan2(re) * 100.0 / (2.0 * PI);
    if cents >= 50.0 {
        cents -= 100.0;
    }
    TuningEstimate { cents, silent: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64) -> AudioTrack {
        let n = (secs * 22050.0) as usize;
        let s = (0..n).map(|i| (0.5 * (2.0 * PI * freq * i as f64 / 22050.0).sin()) as f32).collect();
        AudioTrack::new(s, 22050).unwrap()
    }

    #[test]
    fn in_tune_reference() {
        let t = estimate_tuning(&tone(440.0, 2.0));
        assert!(!t.silent);
        assert!(t.cents.abs() < 1.0, "{}", t.cents);
    }

    #[test]
    fn silence_is_flagged() {
        let t = estimate_tuning(&AudioTrack::new(vec![0.0; 30000], 22050).unwrap());
        assert_eq!(t, TuningEstimate { cents: 0.0, silent: true });
    }

    #[test]
    fn flat_tone_and_octave_invariance() {
        let t = estimate_tuning(&tone(220.0 * 2f64.powf(-0.3 / 12.0), 2.0));
        assert!((t.cents + 30.0).abs() < 1.0, "{}", t.cents);
        let t = estimate_tuning(&tone(880.0 * 2f64.powf(0.45 / 12.0), 2.0));
        assert!((t.cents - 45.0).abs() < 1.0, "{}", t.cents);
    }
}
