use std::f64::consts::PI;
use std::path::Path;

use realfft::RealFftPlanner;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{bin_frequency, frame_count, AudioTrack, BINS_PER_OCTAVE, FRAME_RATE, HARMONICS, HOP, N_BINS, SAMPLE_RATE};
use crate::container;
use crate::error::{invalid, Error, Result};

/// Half-width of each analysis kernel in the frequency domain, in units of
/// the kernel's main-lobe half-width. Side lobes of the Hann window beyond
/// this point are below 2e-4 of the peak.
const KERNEL_EXTENT: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HcqtParams {
    /// `c` in the magnitude mapping `x -> ln(1 + c x)`.
    pub compression: f64,
}

impl Default for HcqtParams {
    fn default() -> Self {
        Self { compression: 1.0 }
    }
}

/// Log-compressed harmonic CQT stack, stored `[harmonic, frame, bin]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HcqtTensor {
    values: Vec<f32>,
    n_frames: usize,
    tuning_cents: f64,
    compression: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    dtype: String,
    shape: [usize; 3],
    harmonics: Vec<f64>,
    frame_rate: f64,
    tuning_cents: f64,
    compression: f64,
}

impl HcqtTensor {
    pub fn from_values(values: Vec<f32>, n_frames: usize, tuning_cents: f64, compression: f64) -> Result<Self> {
        let expected = HARMONICS.len() * n_frames * N_BINS;
        if values.len() != expected {
            return Err(Error::Shape { expected: vec![HARMONICS.len(), n_frames, N_BINS], actual: vec![values.len()] });
        }
        Ok(Self { values, n_frames, tuning_cents, compression })
    }

    pub fn shape(&self) -> [usize; 3] {
        [HARMONICS.len(), self.n_frames, N_BINS]
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn harmonic_factors(&self) -> [f64; 6] {
        HARMONICS
    }

    pub fn frame_rate(&self) -> f64 {
        FRAME_RATE
    }

    pub fn tuning_offset(&self) -> f64 {
        self.tuning_cents
    }

    pub fn compression(&self) -> f64 {
        self.compression
    }

    pub fn get(&self, harmonic: usize, frame: usize, bin: usize) -> f32 {
        self.values[(harmonic * self.n_frames + frame) * N_BINS + bin]
    }

    /// One frame of one harmonic channel.
    pub fn row(&self, harmonic: usize, frame: usize) -> &[f32] {
        let start = (harmonic * self.n_frames + frame) * N_BINS;
        &self.values[start..start + N_BINS]
    }

    /// Undoes the log compression.
    pub fn magnitude(&self, harmonic: usize, frame: usize, bin: usize) -> f64 {
        (self.get(harmonic, frame, bin) as f64).exp_m1() / self.compression
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            kind: "hcqt".into(),
            dtype: "f32".into(),
            shape: self.shape(),
            harmonics: HARMONICS.to_vec(),
            frame_rate: FRAME_RATE,
            tuning_cents: self.tuning_cents,
            compression: self.compression,
        };
        container::write(path, &header, &container::f32_to_bytes(&self.values))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, payload): (Header, _) = container::read(path)?;
        if header.kind != "hcqt" || header.dtype != "f32" {
            return Err(Error::format(path.display().to_string(), "not an f32 HCQT container"));
        }
        if header.shape[0] != HARMONICS.len() || header.shape[2] != N_BINS || header.harmonics != HARMONICS {
            return Err(Error::format(path.display().to_string(), format!("unexpected layout {:?}", header.shape)));
        }
        Self::from_values(container::bytes_to_f32(&payload)?, header.shape[1], header.tuning_cents, header.compression)
    }
}

/// Quality factor of a constant-Q filter bank with 36 bins per octave.
pub fn quality_factor() -> f64 {
    1.0 / (2f64.powf(1.0 / BINS_PER_OCTAVE as f64) - 1.0)
}

/// Length in samples of the analysis window centred on `freq`.
pub fn window_length(freq: f64) -> f64 {
    quality_factor() * SAMPLE_RATE as f64 / freq
}

/// Fourier transform of a unit-sum Hann window evaluated at `x` main-lobe
/// half-widths from its centre.
fn hann_spectrum(x: f64) -> f64 {
    if x.abs() < 1e-9 {
        1.0
    } else if (x.abs() - 1.0).abs() < 1e-9 {
        0.5
    } else {
        -(PI * x).sin() / (PI * x * (x * x - 1.0))
    }
}

/// Computes the six-channel harmonic CQT.
///
/// Each bin is the magnitude of a Hann-windowed complex exponential of
/// length `Q * sr / f` centred on sample `m * 512`, normalised so that a
/// unit-amplitude sinusoid at the bin frequency gives 0.5. The filters are
/// applied in the frequency domain of one zero-padded transform of the whole
/// track; sampling the output at the hop is done by folding each filtered
/// spectrum modulo `n_fft / 512` before a short inverse transform.
pub fn compute_hcqt(track: &AudioTrack, tuning_cents: f64, params: &HcqtParams) -> Result<HcqtTensor> {
    if track.sample_rate() != SAMPLE_RATE {
        return Err(invalid(format!("HCQT expects {SAMPLE_RATE} Hz input, got {}", track.sample_rate())));
    }
    if !(params.compression > 0.0) {
        return Err(invalid("compression constant must be positive"));
    }
    if !tuning_cents.is_finite() {
        return Err(invalid("tuning offset must be finite"));
    }
    let n = track.len();
    let longest = window_length(bin_frequency(0, HARMONICS[0], tuning_cents)).ceil() as usize;
    if n < longest {
        return Err(Error::TrackTooShort { samples: n, required: longest });
    }
    let n_fft = (n + longest + HOP).next_power_of_two();
    let fold = n_fft / HOP;
    let n_frames = frame_count(n);
    let rate = SAMPLE_RATE as f64;

    let mut real_planner = RealFftPlanner::<f64>::new();
    let forward = real_planner.plan_fft_forward(n_fft);
    let mut input = forward.make_input_vec();
    for (dst, &src) in input.iter_mut().zip(track.samples()) {
        *dst = src as f64;
    }
    let mut spectrum = forward.make_output_vec();
    forward.process(&mut input, &mut spectrum).expect("fft sizes are fixed");
    drop(input);

    let inverse = FftPlanner::<f64>::new().plan_fft_inverse(fold);
    let mut scratch = vec![Complex64::default(); inverse.get_inplace_scratch_len()];
    let mut folded = vec![Complex64::default(); fold];
    let mut values = vec![0f32; HARMONICS.len() * n_frames * N_BINS];
    let last = spectrum.len() as f64 - 1.0;

    for (hi, &h) in HARMONICS.iter().enumerate() {
        for bin in 0..N_BINS {
            let freq = bin_frequency(bin, h, tuning_cents);
            if freq >= rate / 2.0 {
                continue;
            }
            let centre = freq * n_fft as f64 / rate;
            let scale = window_length(freq) / n_fft as f64;
            let half = KERNEL_EXTENT / scale;
            let j0 = (centre - half).ceil().max(0.0) as usize;
            let j1 = (centre + half).floor().min(last) as usize;
            folded.fill(Complex64::default());
            for j in j0..=j1 {
                let w = hann_spectrum((j as f64 - centre) * scale);
                folded[j % fold] += spectrum[j] * w;
            }
            inverse.process_with_scratch(&mut folded, &mut scratch);
            for m in 0..n_frames {
                let mag = folded[m].norm() / n_fft as f64;
                values[(hi * n_frames + m) * N_BINS + bin] = (params.compression * mag).ln_1p() as f32;
            }
        }
    }
    HcqtTensor::from_values(values, n_frames, tuning_cents, params.compression)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::midi_to_hz;

    fn tone(freq: f64, secs: f64) -> AudioTrack {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        let s = (0..n).map(|i| (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin() as f32).collect();
        AudioTrack::new(s, SAMPLE_RATE).unwrap()
    }

    fn argmax(row: &[f32]) -> usize {
        row.iter().enumerate().fold((0, f32::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0
    }

    #[test]
    fn shape_contract() {
        let h = compute_hcqt(&tone(440.0, 10.0), 0.0, &HcqtParams::default()).unwrap();
        assert_eq!(h.shape(), [6, 220500 / 512 + 1, 216]);
        assert!(h.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn c4_lands_on_its_centre_bin() {
        let h = compute_hcqt(&tone(midi_to_hz(60.0), 4.0), 0.0, &HcqtParams::default()).unwrap();
        let mid = h.n_frames() / 2;
        assert_eq!(argmax(h.row(1, mid)), 109);
        // The channel with factor 2 analyses twice the bin frequency, so a
        // bare sine shows up one octave lower on the bin axis.
        assert_eq!(argmax(h.row(2, mid)), 73);
        assert_eq!(argmax(h.row(0, mid)), 145);
        let peak = h.magnitude(1, mid, 109);
        assert!((peak - 0.5).abs() < 0.01, "{peak}");
    }

    #[test]
    fn too_short() {
        let err = compute_hcqt(&tone(440.0, 1.0), 0.0, &HcqtParams::default()).unwrap_err();
        assert!(matches!(err, Error::TrackTooShort { .. }));
    }

    #[test]
    fn roundtrip_container() {
        let h = compute_hcqt(&tone(300.0, 3.5), 12.5, &HcqtParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.hcqt");
        h.save(&path).unwrap();
        assert_eq!(HcqtTensor::load(&path).unwrap(), h);
    }
}
