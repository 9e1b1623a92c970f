//! The eight network families and their size grid. Every model maps a
//! `[batch, 6, 75, 216]` HCQT patch to 72 pitch activations of the centre
//! frame; PUnet also predicts a 24-class polyphony distribution.

mod checkpoint;
mod config;
mod layers;
mod net;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{preset, presets, Family, ModelConfig, Preset, ATTENTION_HEADS, POLYPHONY_HIDDEN, TRANSFORMER_LAYERS};
pub use layers::{positional_encoding, Mode};
pub use net::{build_model, count_params, stack_inputs, Forward, Model, ModelOutput, BOTTLENECK};
