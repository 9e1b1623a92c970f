use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::patches::{polyphony_class, Patch};
use super::{N_PITCHES, PATCH_FRAMES};
use crate::error::{invalid, Result};
use crate::signal::{BINS_PER_SEMITONE, HARMONICS, N_BINS};

pub const MAX_TRANSPOSE: i32 = 5;
pub const NOISE_STD: f64 = 1e-4;
pub const EQ_MAX_ALPHA: u32 = 21;
/// Width of the EQ bell in bins (one octave).
pub const EQ_WIDTH: f64 = 36.0;

/// Sub-semitone shifts accepted by [`augment_tune`], in bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TuneShift {
    DownOne,
    DownHalf,
    UpHalf,
    UpOne,
}

impl TuneShift {
    pub const ALL: [TuneShift; 4] = [TuneShift::DownOne, TuneShift::DownHalf, TuneShift::UpHalf, TuneShift::UpOne];

    pub fn bins(self) -> f64 {
        match self {
            TuneShift::DownOne => -1.0,
            TuneShift::DownHalf => -0.5,
            TuneShift::UpHalf => 0.5,
            TuneShift::UpOne => 1.0,
        }
    }

    pub fn from_bins(bins: f64) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.bins() == bins)
            .ok_or_else(|| invalid(format!("tuning shift must be one of -1, -0.5, 0.5, 1 bins, got {bins}")))
    }
}

/// Applies `f(row_in, row_out)` to every `[bin]` row of the input.
fn map_rows(patch: &Patch, mut f: impl FnMut(&[f32], &mut [f32])) -> Vec<f32> {
    let mut out = vec![0f32; patch.input.len()];
    for (src, dst) in patch.input.chunks_exact(N_BINS).zip(out.chunks_exact_mut(N_BINS)) {
        f(src, dst);
    }
    out
}

fn shift_row(src: &[f32], dst: &mut [f32], shift: i64) {
    for (b, d) in dst.iter_mut().enumerate() {
        let s = b as i64 - shift;
        *d = if (0..N_BINS as i64).contains(&s) { src[s as usize] } else { 0.0 };
    }
}

/// Moves the spectrum by `3 * shift` bins and the labels by `shift`
/// semitones. Vacated bins become zero; labels pushed off the range are lost.
pub fn augment_transpose(patch: &Patch, shift: i32) -> Result<Patch> {
    if shift.abs() > MAX_TRANSPOSE {
        return Err(invalid(format!("transposition must be within +-{MAX_TRANSPOSE} semitones, got {shift}")));
    }
    let bins = shift as i64 * BINS_PER_SEMITONE as i64;
    let input = map_rows(patch, |src, dst| shift_row(src, dst, bins));
    let mut target = [0u8; N_PITCHES];
    for (p, t) in target.iter_mut().enumerate() {
        let s = p as i64 - shift as i64;
        if (0..N_PITCHES as i64).contains(&s) {
            *t = patch.pitch_target[s as usize];
        }
    }
    Ok(Patch { input, pitch_target: target, polyphony_target: polyphony_class(&target) })
}

/// Shifts the bin axis by one bin, or by half a bin where each output bin is
/// the mean of the two input bins it straddles. Labels are untouched.
pub fn augment_tune(patch: &Patch, shift: TuneShift) -> Patch {
    let input = match shift {
        TuneShift::UpOne => map_rows(patch, |s, d| shift_row(s, d, 1)),
        TuneShift::DownOne => map_rows(patch, |s, d| shift_row(s, d, -1)),
        TuneShift::UpHalf => map_rows(patch, |s, d| {
            for b in 0..N_BINS {
                let below = if b > 0 { s[b - 1] } else { 0.0 };
                d[b] = 0.5 * (below + s[b]);
            }
        }),
        TuneShift::DownHalf => map_rows(patch, |s, d| {
            for b in 0..N_BINS {
                let above = if b + 1 < N_BINS { s[b + 1] } else { 0.0 };
                d[b] = 0.5 * (s[b] + above);
            }
        }),
    };
    Patch { input, ..patch.clone() }
}

/// Adds i.i.d. Gaussian noise with standard deviation 1e-4.
pub fn augment_noise(patch: &Patch, seed: u64) -> Patch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise(patch, &mut rng)
}

fn add_noise(patch: &Patch, rng: &mut impl Rng) -> Patch {
    let normal = Normal::new(0.0, NOISE_STD).expect("valid deviation");
    let input = patch.input.iter().map(|&v| v + normal.sample(rng) as f32).collect();
    Patch { input, ..patch.clone() }
}

/// Bin weights of the random equaliser: 1 at bin `beta` (1-based) and
/// falling towards `1 - alpha / 21` far away from it.
pub fn eq_weights(alpha: u32, beta: u32) -> Result<[f64; N_BINS]> {
    if !(1..=EQ_MAX_ALPHA).contains(&alpha) {
        return Err(invalid(format!("EQ depth alpha must be in 1..={EQ_MAX_ALPHA}, got {alpha}")));
    }
    if !(1..=N_BINS as u32).contains(&beta) {
        return Err(invalid(format!("EQ centre beta must be in 1..={N_BINS}, got {beta}")));
    }
    let depth = alpha as f64 / EQ_MAX_ALPHA as f64;
    let centre = beta as f64 - 1.0;
    let mut w = [0.0; N_BINS];
    for (b, wb) in w.iter_mut().enumerate() {
        let d = b as f64 - centre;
        *wb = 1.0 - depth * (1.0 - (-d * d / (2.0 * EQ_WIDTH * EQ_WIDTH)).exp());
    }
    Ok(w)
}

pub fn augment_random_eq(patch: &Patch, alpha: u32, beta: u32) -> Result<Patch> {
    let w = eq_weights(alpha, beta)?;
    let input = map_rows(patch, |s, d| {
        for b in 0..N_BINS {
            d[b] = (s[b] as f64 * w[b]) as f32;
        }
    });
    Ok(Patch { input, ..patch.clone() })
}

/// Per-example augmentation probabilities. Augmentations compose in the
/// order transpose, tune, EQ, noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub transpose: f64,
    pub tune: f64,
    pub eq: f64,
    pub noise: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self { transpose: 0.5, tune: 0.5, eq: 0.5, noise: 1.0 }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        Self { transpose: 0.0, tune: 0.0, eq: 0.0, noise: 0.0 }
    }

    pub fn apply(&self, patch: &Patch, rng: &mut impl Rng) -> Patch {
        let mut out = patch.clone();
        if rng.random_bool(self.transpose.clamp(0.0, 1.0)) {
            let shift = rng.random_range(-MAX_TRANSPOSE..=MAX_TRANSPOSE);
            out = augment_transpose(&out, shift).expect("shift drawn in range");
        }
        if rng.random_bool(self.tune.clamp(0.0, 1.0)) {
            let shift = TuneShift::ALL[rng.random_range(0..TuneShift::ALL.len())];
            out = augment_tune(&out, shift);
        }
        if rng.random_bool(self.eq.clamp(0.0, 1.0)) {
            let alpha = rng.random_range(1..=EQ_MAX_ALPHA);
            let beta = rng.random_range(1..=N_BINS as u32);
            out = augment_random_eq(&out, alpha, beta).expect("parameters drawn in range");
        }
        if rng.random_bool(self.noise.clamp(0.0, 1.0)) {
            out = add_noise(&out, rng);
        }
        out
    }
}

// Keep the patch layout assumptions visible to the row helpers above.
const _: () = assert!(HARMONICS.len() * PATCH_FRAMES * N_BINS == super::patches::PATCH_LEN);

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_patch(active: &[usize]) -> Patch {
        let input = (0..super::super::patches::PATCH_LEN).map(|i| (i % N_BINS) as f32 + 1.0).collect();
        let mut t = [0u8; N_PITCHES];
        for &a in active {
            t[a] = 1;
        }
        Patch::new(input, t).unwrap()
    }

    #[test]
    fn transpose_examples() {
        let p = ramp_patch(&[0]);
        assert_eq!(augment_transpose(&p, 0).unwrap(), p);
        let up = augment_transpose(&p, 1).unwrap();
        assert_eq!(up.pitch_target[1], 1);
        assert_eq!(up.active_pitches(), 1);
        assert_eq!(up.at(0, 0, 3), p.at(0, 0, 0));
        assert_eq!(up.at(5, 74, 2), 0.0);
        let down = augment_transpose(&p, -1).unwrap();
        assert_eq!((down.active_pitches(), down.polyphony_target), (0, 0));
        assert!(augment_transpose(&p, 6).is_err());
    }

    #[test]
    fn tune_examples() {
        let p = ramp_patch(&[5]);
        let back = augment_tune(&augment_tune(&p, TuneShift::UpOne), TuneShift::DownOne);
        for b in 0..N_BINS {
            let expect = if b == N_BINS - 1 { 0.0 } else { p.at(2, 10, b) };
            assert_eq!(back.at(2, 10, b), expect);
        }
        // Bin b holds b + 1, so bins 0 and 1 carry 2 and 4 after doubling.
        let doubled = Patch { input: p.input.iter().map(|v| v * 2.0).collect(), ..p.clone() };
        let half = augment_tune(&doubled, TuneShift::UpHalf);
        assert_eq!(half.at(0, 0, 1), 3.0);
        assert_eq!(half.pitch_target, p.pitch_target);
        assert!(TuneShift::from_bins(0.25).is_err());
    }

    #[test]
    fn eq_contract() {
        let w = eq_weights(1, 100).unwrap();
        assert_eq!(w[99], 1.0);
        assert!(w.iter().all(|&v| v > 1.0 - 1.0 / 21.0 - 1e-12 && v <= 1.0));
        let w = eq_weights(21, 1).unwrap();
        assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(eq_weights(0, 1).is_err() && eq_weights(22, 1).is_err() && eq_weights(1, 217).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let p = ramp_patch(&[]);
        assert_eq!(augment_noise(&p, 4), augment_noise(&p, 4));
        assert_ne!(augment_noise(&p, 4), augment_noise(&p, 5));
    }
}
