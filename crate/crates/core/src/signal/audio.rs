use std::path::Path;

use rubato::{FftFixedIn, Resampler};

use super::AudioTrack;
use crate::error::{invalid, Error, Result};

/// Reads a WAV or FLAC file, averages its channels and converts it to the
/// analysis sample rate.
pub fn load_audio(path: &Path) -> Result<AudioTrack> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let (interleaved, channels, rate) = match ext.as_deref() {
        Some("wav") | Some("wave") => read_wav(path)?,
        Some("flac") => read_flac(path)?,
        _ => return Err(Error::Audio { path: path.into(), reason: "unsupported file extension".into() }),
    };
    if channels == 0 {
        return Err(Error::Audio { path: path.into(), reason: "no channels".into() });
    }
    let mono: Vec<f32> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();
    AudioTrack::new(mono, rate)
        .map_err(|e| Error::Audio { path: path.into(), reason: e.to_string() })?
        .to_analysis_rate()
}

fn read_wav(path: &Path) -> Result<(Vec<f32>, usize, u32)> {
    let fail = |e: hound::Error| Error::Audio { path: path.into(), reason: e.to_string() };
    let mut reader = hound::WavReader::open(path).map_err(fail)?;
    let spec = reader.spec();
    let samples = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<Result<Vec<_>, _>>().map_err(fail)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<Vec<_>, _>>()
                .map_err(fail)?
        }
    };
    Ok((samples, spec.channels as usize, spec.sample_rate))
}

fn read_flac(path: &Path) -> Result<(Vec<f32>, usize, u32)> {
    let fail = |e: claxon::Error| Error::Audio { path: path.into(), reason: e.to_string() };
    let mut reader = claxon::FlacReader::open(path).map_err(fail)?;
    let info = reader.streaminfo();
    let scale = 1.0 / (1i64 << (info.bits_per_sample - 1)) as f32;
    let samples = reader
        .samples()
        .map(|s| s.map(|v| v as f32 * scale))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?;
    Ok((samples, info.channels as usize, info.sample_rate))
}

/// Band-limited FFT resampling. The output has `round(len * to / from)`
/// samples and is aligned with the input (the filter delay is removed).
pub fn resample(input: &[f32], from: u32, to: u32) -> Result<Vec<f32>> {
    if from == 0 || to == 0 {
        return Err(invalid("sample rates must be positive"));
    }
    if from == to || input.is_empty() {
        return Ok(input.to_vec());
    }
    let fail = |e: &dyn std::fmt::Display| invalid(format!("resampling {from} Hz -> {to} Hz failed: {e}"));
    let mut r = FftFixedIn::<f64>::new(from as usize, to as usize, 1024, 2, 1).map_err(|e| fail(&e))?;
    let expected = (input.len() as f64 * to as f64 / from as f64).round() as usize;
    let delay = r.output_delay();
    let signal: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let mut out = Vec::with_capacity(expected + delay + 2048);
    let mut pos = 0;
    while pos + r.input_frames_next() <= signal.len() {
        let need = r.input_frames_next();
        let chunk = r.process(&[&signal[pos..pos + need]], None).map_err(|e| fail(&e))?;
        out.extend_from_slice(&chunk[0]);
        pos += need;
    }
    let tail = r.process_partial(Some(&[&signal[pos..]]), None).map_err(|e| fail(&e))?;
    out.extend_from_slice(&tail[0]);
    while out.len() < expected + delay {
        let flush = r.process_partial::<&[f64]>(None, None).map_err(|e| fail(&e))?;
        out.extend_from_slice(&flush[0]);
    }
    Ok(out[delay..delay + expected].iter().map(|&v| v as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, secs: f64) -> Vec<f32> {
        let n = (secs * rate as f64) as usize;
        (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin() as f32).collect()
    }

    #[test]
    fn resampling_preserves_a_sine() {
        let x = sine(440.0, 44100, 1.0);
        let y = resample(&x, 44100, 22050).unwrap();
        assert_eq!(y.len(), 22050);
        let expect = sine(440.0, 22050, 1.0);
        // Ignore the edges where the filter sees the implicit zero padding.
        let err = y[500..21500].iter().zip(&expect[500..21500]).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
        assert!(err < 1e-3, "max error {err}");
    }

    #[test]
    fn wav_roundtrip_downmixes_and_resamples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let spec = hound::WavSpec { channels: 2, sample_rate: 44100, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for v in sine(220.0, 44100, 0.5) {
            let s = (v * 16000.0) as i16;
            w.write_sample(s).unwrap();
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        let track = load_audio(&path).unwrap();
        assert_eq!(track.sample_rate(), 22050);
        assert_eq!(track.len(), 11025);
        let peak = track.samples().iter().fold(0f32, |m, v| m.max(v.abs()));
        assert!((peak - 16000.0 / 32768.0).abs() < 0.01);
    }

    #[test]
    fn unknown_extension_is_an_error() {
        assert!(load_audio(Path::new("foo.mp3")).is_err());
    }
}
