//! Deterministic inputs shared by the benchmarks.

use notegen::midi::{write_midi, MidiFile};
use notegen::note_matrix::matrix_to_midi;
use notegen::{ModelConfig, ModelParams, NoteMatrix, NoteRow, Rng, Tensor};

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).expect("shape matches data")
}

/// A `[batch, window, 3]` input with entries in `[0, 1)`.
pub fn random_batch(batch: usize, window: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let data = (0..batch * window * 3).map(|_| rng.next_f64()).collect();
    Tensor::new(&[batch, window, 3], data).expect("shape matches data")
}

pub fn model(hidden: usize, window: usize, dropout_rate: f64) -> ModelParams {
    let cfg = ModelConfig {
        hidden,
        window,
        dropout_rate,
        ..ModelConfig::default()
    };
    ModelParams::init(&cfg, &mut Rng::new(1)).expect("valid config")
}

/// A single-track melody of `notes` notes.
pub fn song(notes: usize, seed: u64) -> MidiFile {
    let mut rng = Rng::new(seed);
    let rows = (0..notes)
        .map(|i| {
            let dt = if i == 0 { 0 } else { 60 * rng.below(4) as u32 };
            NoteRow::new(48 + rng.below(36) as u8, 40 + rng.below(80) as u8, dt)
        })
        .collect();
    matrix_to_midi(&NoteMatrix { rows, division: 480 }, 120).expect("valid rows")
}

pub fn song_bytes(notes: usize, seed: u64) -> Vec<u8> {
    write_midi(&song(notes, seed)).expect("valid file")
}
