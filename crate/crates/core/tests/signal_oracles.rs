use std::f64::consts::PI;

use mpe::signal::{
    bin_frequency, compute_hcqt, estimate_tuning, midi_to_hz, AudioTrack, HcqtParams, HARMONICS, HOP, N_BINS,
    SAMPLE_RATE,
};

const SR: f64 = SAMPLE_RATE as f64;

fn synth(parts: &[(f64, f64)], secs: f64) -> AudioTrack {
    let n = (secs * SR) as usize;
    let s = (0..n)
        .map(|i| parts.iter().map(|&(f, a)| a * (2.0 * PI * f * i as f64 / SR).sin()).sum::<f64>() as f32)
        .collect();
    AudioTrack::new(s, SAMPLE_RATE).unwrap()
}

fn argmax(row: &[f32]) -> usize {
    row.iter().enumerate().fold((0, f32::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0
}

/// Straight time-domain evaluation of one CQT coefficient: a Hann-windowed
/// complex exponential centred on the frame, normalised by the window sum.
fn direct_coefficient(x: &[f32], freq: f64, frame: usize) -> f64 {
    let q = 1.0 / (2f64.powf(1.0 / 36.0) - 1.0);
    let len = q * SR / freq;
    let half = (len / 2.0).floor() as i64;
    let centre = (frame * HOP) as i64;
    let (mut re, mut im, mut wsum) = (0.0, 0.0, 0.0);
    for t in -half..=half {
        let w = 0.5 + 0.5 * (2.0 * PI * t as f64 / len).cos();
        wsum += w;
        let idx = centre + t;
        if idx < 0 || idx >= x.len() as i64 {
            continue;
        }
        let v = x[idx as usize] as f64 * w;
        let ph = -2.0 * PI * freq * t as f64 / SR;
        re += v * ph.cos();
        im += v * ph.sin();
    }
    (re * re + im * im).sqrt() / wsum
}

#[test]
fn spectral_route_matches_direct_evaluation() {
    // A chord plus a deterministic noise floor so every bin carries energy.
    let mut track = synth(&[(196.0, 0.3), (311.1, 0.2), (1234.5, 0.1), (4400.0, 0.05)], 4.0);
    let noisy: Vec<f32> = track
        .samples()
        .iter()
        .enumerate()
        .map(|(i, &v)| v + 0.01 * (((i as u64 * 2654435761) % 1000) as f32 / 500.0 - 1.0))
        .collect();
    track = AudioTrack::new(noisy, SAMPLE_RATE).unwrap();
    let tuning = 7.0;
    let h = compute_hcqt(&track, tuning, &HcqtParams::default()).unwrap();
    // Errors are judged against the coefficient itself plus a small floor
    // tied to the strongest partial (amplitude 0.3 gives a peak of 0.15);
    // truncating the kernels in frequency leaks about 1e-4 of it.
    let floor = 2e-4 * 0.15;
    let mut worst: f64 = 0.0;
    for (hi, &factor) in HARMONICS.iter().enumerate() {
        for bin in (0..N_BINS).step_by(7) {
            for frame in [0, 40, h.n_frames() / 2, h.n_frames() - 1] {
                let want = direct_coefficient(track.samples(), bin_frequency(bin, factor, tuning), frame);
                let got = h.magnitude(hi, frame, bin);
                worst = worst.max((got - want).abs() / (want + floor / 0.01));
            }
        }
    }
    assert!(worst < 0.02, "worst relative deviation {worst}");
}

#[test]
fn harmonic_alignment_for_many_pitches() {
    for midi in [36.0, 48.0, 57.0, 60.0, 69.0, 76.0, 84.0] {
        let h = compute_hcqt(&synth(&[(midi_to_hz(midi), 0.5)], 4.0), 0.0, &HcqtParams::default()).unwrap();
        let frame = h.n_frames() / 2;
        let base = argmax(h.row(1, frame)) as i64;
        assert_eq!(base, 3 * (midi as i64 - 24) + 1);
        for (hi, &factor) in HARMONICS.iter().enumerate() {
            let expect = base - (36.0 * factor.log2()).round() as i64;
            if (0..N_BINS as i64).contains(&expect) && expect > 2 && expect < N_BINS as i64 - 3 {
                assert_eq!(argmax(h.row(hi, frame)) as i64, expect, "midi {midi} factor {factor}");
            }
        }
    }
}

#[test]
fn tuning_equivariance() {
    let cents = 100.0 / 3.0;
    for midi in [45.0, 62.0, 79.0] {
        let f = midi_to_hz(midi);
        let plain = compute_hcqt(&synth(&[(f, 0.5)], 4.0), 0.0, &HcqtParams::default()).unwrap();
        let shifted = synth(&[(f * 2f64.powf(cents / 1200.0), 0.5)], 4.0);
        let tuned = compute_hcqt(&shifted, cents, &HcqtParams::default()).unwrap();
        let frame = plain.n_frames() / 2;
        let base = 3 * (midi as i64 - 24) + 1;
        for (hi, &factor) in HARMONICS.iter().enumerate() {
            let expect = base - (36.0 * factor.log2()).round() as i64;
            if !(3..N_BINS as i64 - 3).contains(&expect) {
                continue;
            }
            assert_eq!(argmax(plain.row(hi, frame)) as i64, expect);
            assert_eq!(argmax(tuned.row(hi, frame)) as i64, expect);
        }
    }
}

#[test]
fn compression_preserves_argmax() {
    let track = synth(&[(220.0, 0.4), (523.0, 0.3)], 4.0);
    let strong = compute_hcqt(&track, 0.0, &HcqtParams { compression: 1000.0 }).unwrap();
    let weak = compute_hcqt(&track, 0.0, &HcqtParams { compression: 0.001 }).unwrap();
    for hi in 0..HARMONICS.len() {
        for frame in (0..strong.n_frames()).step_by(13) {
            assert_eq!(argmax(strong.row(hi, frame)), argmax(weak.row(hi, frame)));
        }
    }
}

/// Locates the spectral peak by brute force on a 0.005 Hz grid.
fn brute_force_peak(x: &[f32], lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let window: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let mut best = (lo, 0.0);
    let mut f = lo;
    while f <= hi {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate() {
            let ph = 2.0 * PI * f * i as f64 / SR;
            re += v as f64 * window[i] * ph.cos();
            im -= v as f64 * window[i] * ph.sin();
        }
        let m = re * re + im * im;
        if m > best.1 {
            best = (f, m);
        }
        f += 0.005;
    }
    best.0
}

#[test]
fn tuning_matches_brute_force_oracle() {
    let track = synth(&[(446.4, 0.5)], 2.0);
    let oracle_hz = brute_force_peak(&track.samples()[..8192], 444.0, 449.0);
    let oracle = 1200.0 * (oracle_hz / 440.0).log2();
    assert!((oracle - 25.0).abs() < 1.0, "oracle {oracle}");
    let est = estimate_tuning(&track);
    assert!((est.cents - oracle).abs() < 2.0, "estimate {} oracle {oracle}", est.cents);
    assert!((est.cents - 25.0).abs() < 2.0);

    let a4 = estimate_tuning(&synth(&[(440.0, 0.5)], 2.0));
    assert!(a4.cents.abs() < 1.0);
}

#[test]
fn tuning_is_deterministic_and_ignores_octaves() {
    let track = synth(&[(446.4 / 2.0, 0.4), (446.4 * 1.5, 0.2), (446.4 * 2.0, 0.3)], 2.0);
    let a = estimate_tuning(&track);
    let b = estimate_tuning(&track);
    assert_eq!(a, b);
    // The fifth (x1.5) sits 2 cents off the tempered grid; the result is a
    // magnitude-weighted blend.
    assert!((a.cents - 25.0).abs() < 2.0, "{}", a.cents);
}
