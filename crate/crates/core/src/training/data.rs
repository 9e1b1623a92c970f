use std::sync::Arc;

use autograd::{Float, Tensor};

use crate::datasets::patches::{copy_window, patch_centers, polyphony_class};
use crate::datasets::{Patch, PianoRoll, N_PITCHES, PATCH_LEN};
use crate::error::{invalid, Result};
use crate::signal::HcqtTensor;

#[derive(Clone, Debug)]
enum Example {
    Window { track: usize, center: usize },
    Owned(Arc<Patch>),
}

/// Training examples drawn from cached tracks (materialised on demand) or
/// given directly as patches.
#[derive(Clone, Debug, Default)]
pub struct PatchDataset {
    tracks: Vec<Arc<(HcqtTensor, PianoRoll)>>,
    examples: Vec<Example>,
}

impl PatchDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_patches(patches: Vec<Patch>) -> Self {
        Self { tracks: Vec::new(), examples: patches.into_iter().map(|p| Example::Owned(Arc::new(p))).collect() }
    }

    /// Adds every patch of a track at `stride`; returns how many were added.
    pub fn add_track(&mut self, hcqt: HcqtTensor, roll: PianoRoll, stride: usize) -> Result<usize> {
        if hcqt.n_frames() != roll.n_frames() {
            return Err(invalid(format!("HCQT has {} frames but the piano roll {}", hcqt.n_frames(), roll.n_frames())));
        }
        let centers = patch_centers(hcqt.n_frames(), stride)?;
        let track = self.tracks.len();
        self.tracks.push(Arc::new((hcqt, roll)));
        self.examples.extend(centers.iter().map(|&center| Example::Window { track, center }));
        Ok(centers.len())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, i: usize) -> Patch {
        match &self.examples[i] {
            Example::Owned(p) => (**p).clone(),
            Example::Window { track, center } => {
                let (hcqt, roll) = &*self.tracks[*track];
                let mut input = vec![0f32; PATCH_LEN];
                copy_window(hcqt, *center, &mut input);
                let mut target = [0u8; N_PITCHES];
                target.copy_from_slice(roll.row(*center));
                Patch { input, pitch_target: target, polyphony_target: polyphony_class(&target) }
            }
        }
    }
}

/// A batch in tensor form.
pub struct Batch<F> {
    pub inputs: Tensor<F>,
    pub pitch_targets: Tensor<F>,
    pub polyphony_targets: Vec<usize>,
}

pub fn collate<F: Float>(patches: &[Patch]) -> Batch<F> {
    let b = patches.len();
    let mut inputs = Vec::with_capacity(b * PATCH_LEN);
    let mut targets = Vec::with_capacity(b * N_PITCHES);
    for p in patches {
        inputs.extend(p.input.iter().map(|&v| F::of(v as f64)));
        targets.extend(p.pitch_target.iter().map(|&t| F::of(t as f64)));
    }
    let shape = [b, crate::signal::HARMONICS.len(), crate::datasets::PATCH_FRAMES, crate::signal::N_BINS];
    Batch {
        inputs: Tensor::from_vec(&shape, inputs),
        pitch_targets: Tensor::from_vec(&[b, N_PITCHES], targets),
        polyphony_targets: patches.iter().map(|p| p.polyphony_target as usize).collect(),
    }
}
