use super::pianoroll::PianoRoll;
use super::{CONTEXT, N_PITCHES, N_POLY_CLASSES, PATCH_FRAMES};
use crate::error::{invalid, Error, Result};
use crate::signal::{HcqtTensor, HARMONICS, N_BINS};

/// Values in one training example: `[6, 75, 216]`.
pub const PATCH_LEN: usize = HARMONICS.len() * PATCH_FRAMES * N_BINS;

/// A 75-frame HCQT excerpt with the labels of its centre frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    /// `[harmonic, frame, bin]`, row-major.
    pub input: Vec<f32>,
    pub pitch_target: [u8; N_PITCHES],
    pub polyphony_target: u8,
}

pub fn polyphony_class(target: &[u8]) -> u8 {
    let active = target.iter().filter(|&&v| v != 0).count();
    active.min(N_POLY_CLASSES - 1) as u8
}

impl Patch {
    pub fn new(input: Vec<f32>, pitch_target: [u8; N_PITCHES]) -> Result<Self> {
        if input.len() != PATCH_LEN {
            return Err(Error::Shape { expected: vec![HARMONICS.len(), PATCH_FRAMES, N_BINS], actual: vec![input.len()] });
        }
        let polyphony_target = polyphony_class(&pitch_target);
        Ok(Self { input, pitch_target, polyphony_target })
    }

    pub fn at(&self, harmonic: usize, frame: usize, bin: usize) -> f32 {
        self.input[(harmonic * PATCH_FRAMES + frame) * N_BINS + bin]
    }

    pub fn active_pitches(&self) -> usize {
        self.pitch_target.iter().filter(|&&v| v != 0).count()
    }
}

/// Number of patches a track of `n_frames` yields at `stride`.
pub fn patch_count(n_frames: usize, stride: usize) -> usize {
    if n_frames < PATCH_FRAMES || stride == 0 {
        0
    } else {
        (n_frames - PATCH_FRAMES) / stride + 1
    }
}

/// Centre frames `37, 37 + stride, ...` up to `n_frames - 38`.
pub fn patch_centers(n_frames: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(invalid("stride must be at least 1"));
    }
    Ok((0..patch_count(n_frames, stride)).map(|i| CONTEXT + i * stride).collect())
}

/// Copies the excerpt centred on `center` into `dst`. Frames outside the
/// track are replaced by the nearest edge frame.
pub fn copy_window(hcqt: &HcqtTensor, center: usize, dst: &mut [f32]) {
    assert_eq!(dst.len(), PATCH_LEN, "destination must hold one patch");
    let n = hcqt.n_frames() as i64;
    for h in 0..HARMONICS.len() {
        for t in 0..PATCH_FRAMES {
            let src = (center as i64 + t as i64 - CONTEXT as i64).clamp(0, n - 1) as usize;
            let off = (h * PATCH_FRAMES + t) * N_BINS;
            dst[off..off + N_BINS].copy_from_slice(hcqt.row(h, src));
        }
    }
}

/// The patch centred on `center`, which must have full context.
pub fn extract_patch(hcqt: &HcqtTensor, roll: &PianoRoll, center: usize) -> Result<Patch> {
    if hcqt.n_frames() != roll.n_frames() {
        return Err(invalid(format!("HCQT has {} frames but the piano roll {}", hcqt.n_frames(), roll.n_frames())));
    }
    if center < CONTEXT || center + CONTEXT >= hcqt.n_frames() {
        return Err(invalid(format!("frame {center} lacks {CONTEXT} frames of context")));
    }
    let mut input = vec![0f32; PATCH_LEN];
    copy_window(hcqt, center, &mut input);
    let mut target = [0u8; N_PITCHES];
    target.copy_from_slice(roll.row(center));
    Patch::new(input, target)
}

/// All patches of one track at `stride`. Tracks shorter than one patch
/// yield nothing.
pub fn sample_patches(hcqt: &HcqtTensor, roll: &PianoRoll, stride: usize) -> Result<Vec<Patch>> {
    let centers = patch_centers(hcqt.n_frames(), stride)?;
    if centers.is_empty() {
        log::warn!("track with {} frames is shorter than one {PATCH_FRAMES}-frame patch", hcqt.n_frames());
    }
    centers.into_iter().map(|c| extract_patch(hcqt, roll, c)).collect()
}

/// The stride whose total patch count over tracks of the given lengths is
/// nearest to `target`; ties go to the larger stride.
pub fn choose_stride(target: usize, frame_counts: &[usize]) -> Result<usize> {
    let longest = frame_counts.iter().copied().max().unwrap_or(0);
    if longest < PATCH_FRAMES {
        return Err(invalid("no track is long enough for a single patch"));
    }
    let total = |s: usize| frame_counts.iter().map(|&n| patch_count(n, s)).sum::<usize>();
    let mut best = (1, total(1).abs_diff(target));
    for s in 2..=longest - PATCH_FRAMES + 1 {
        let diff = total(s).abs_diff(target);
        if diff <= best.1 {
            best = (s, diff);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers() {
        assert_eq!(patch_centers(75, 1).unwrap(), vec![37]);
        assert_eq!(patch_centers(175, 50).unwrap(), vec![37, 87, 137]);
        assert!(patch_centers(74, 1).unwrap().is_empty());
        assert_eq!(*patch_centers(200, 1).unwrap().last().unwrap(), 200 - 38);
        assert!(patch_centers(100, 0).is_err());
    }

    #[test]
    fn stride_choice_hits_target() {
        let counts = [1075, 2075, 575];
        // Stride 10 gives 101 + 201 + 51 = 353 patches.
        assert_eq!(choose_stride(353, &counts).unwrap(), 10);
        assert_eq!(choose_stride(10_000_000, &counts).unwrap(), 1);
        assert!(choose_stride(10, &[10, 20]).is_err());
    }

    #[test]
    fn polyphony_is_clamped() {
        assert_eq!(polyphony_class(&[1; 72]), 23);
        assert_eq!(polyphony_class(&[0; 72]), 0);
    }
}
