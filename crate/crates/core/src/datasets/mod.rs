//! Manifests, note annotations, piano-roll targets, training patches and
//! augmentation.

pub mod annotations;
pub mod augment;
pub mod features;
pub mod manifest;
pub mod pianoroll;
pub mod patches;
pub mod synth;

pub use annotations::{load_notes, AnnotationFormat, NoteEvent};
pub use augment::{
    augment_noise, augment_random_eq, augment_transpose, augment_tune, eq_weights, AugmentPolicy, TuneShift,
};
pub use features::{extract_track, FeatureCache};
pub use manifest::{DatasetId, Manifest, TrackRecord};
pub use pianoroll::PianoRoll;
pub use patches::{choose_stride, extract_patch, patch_centers, sample_patches, Patch, PATCH_LEN};
pub use synth::{synth_track, write_corpus, SynthConfig, SynthTrack};

/// Semitone targets, MIDI 24..=95.
pub const N_PITCHES: usize = 72;
pub const LOWEST_MIDI: u8 = 24;
/// Frames of context on each side of the labelled centre frame.
pub const CONTEXT: usize = 37;
pub const PATCH_FRAMES: usize = 2 * CONTEXT + 1;
/// Polyphony classes 0..=23; larger counts fall into the last class.
pub const N_POLY_CLASSES: usize = 24;
