//! Symbolic music generation with a single-layer LSTM.
//!
//! The pipeline reads Standard MIDI Files ([`midi`]), turns their note onsets
//! into a scaled `(pitch, velocity, inter-onset ticks)` matrix
//! ([`note_matrix`]), trains an LSTM → dropout → dense regressor with MSE and
//! RMSprop ([`model`], [`optim`], [`trainer`]) and continues a seed sequence
//! one row at a time to write new MIDI ([`generator`]).
//!
//! All arithmetic is `f64` on the small [`numerics::Tensor`] type, and every
//! random draw comes from the seeded [`numerics::Rng`], so runs replay
//! bit-for-bit.

pub mod checkpoint;
mod error;
pub mod generator;
pub mod midi;
pub mod model;
pub mod note_matrix;
pub mod numerics;
pub mod optim;
pub mod trainer;

pub use error::{Error, Result};
pub use midi::{parse_midi, write_midi, MidiFile};
pub use model::{Mode, ModelConfig, ModelParams, ParamGrads};
pub use note_matrix::{NoteMatrix, NoteRow, ScalingParams};
pub use numerics::{Rng, Tensor};
pub use trainer::{TrainConfig, TrainRecord};
