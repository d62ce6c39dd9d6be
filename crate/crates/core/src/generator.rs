//! Autoregressive generation from a trained checkpoint and MIDI export.
//!
//! Each step feeds the current `window` rows to the model in inference mode,
//! clamps the prediction into `[0, 1]`, appends it and drops the oldest row.
//! The LSTM state starts from zero for every window, so row `k` depends only
//! on rows `k - window .. k`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::load_checkpoint;
use crate::error::{Error, Result};
use crate::midi::{merge_tracks, parse_midi, write_midi, MidiFile};
use crate::model::{predict, ModelParams};
use crate::note_matrix::{clamp_unit, events_to_matrix, matrix_to_midi, scale, unscale, NoteMatrix, ScalingParams, ROW_WIDTH};
use crate::numerics::{Rng, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedSource {
    /// First `window` notes of a MIDI file.
    Midi(PathBuf),
    /// Uniform rows in `[0, 1]` drawn from this seed.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateConfig {
    pub checkpoint_path: PathBuf,
    pub seed_source: SeedSource,
    pub length: usize,
    /// Defaults to half a quarter note.
    pub note_duration_ticks: Option<u32>,
    pub output_path: PathBuf,
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidConfig("generation length must be at least 1".into()));
        }
        if self.note_duration_ticks == Some(0) {
            return Err(Error::InvalidConfig("note duration must be at least one tick".into()));
        }
        Ok(())
    }
}

/// Scaled `[window, 3]` seed taken from the first `window` notes of a file,
/// plus the file's division.
pub fn seed_window_from_midi(path: &Path, scaling: &ScalingParams, window: usize) -> Result<(Tensor, u16)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file = parse_midi(&bytes)?;
    let (events, _) = merge_tracks(&file);
    let mut matrix = events_to_matrix(&events, file.division);
    if matrix.len() < window {
        return Err(Error::SeedTooShort {
            needed: window,
            found: matrix.len(),
        });
    }
    matrix.rows.truncate(window);
    Ok((scale(&matrix, scaling), file.division))
}

pub fn random_seed_window(seed: u64, window: usize) -> Tensor {
    let mut rng = Rng::new(seed);
    let data = (0..window * ROW_WIDTH).map(|_| rng.next_f64()).collect();
    Tensor::new(&[window, ROW_WIDTH], data).expect("shape matches data")
}

/// Generates `length` scaled rows continuing `seed` (`[window, 3]`).
/// Returns `[length, 3]` with every entry in `[0, 1]`.
pub fn continue_sequence(params: &ModelParams, seed: &Tensor, length: usize) -> Result<Tensor> {
    let window = params.window;
    if seed.shape() != [window, ROW_WIDTH] {
        return Err(Error::InvalidConfig(format!(
            "seed window has shape {:?}, model expects [{window}, {ROW_WIDTH}]",
            seed.shape()
        )));
    }
    let mut context = seed.data().to_vec();
    let mut out = Vec::with_capacity(length * ROW_WIDTH);
    for _ in 0..length {
        let input = Tensor::new(&[1, window, ROW_WIDTH], context.clone())?;
        let next: Vec<f64> = predict(params, &input)?.data().iter().map(|&x| clamp_unit(x)).collect();
        context.drain(..ROW_WIDTH);
        context.extend_from_slice(&next);
        out.extend(next);
    }
    Ok(Tensor::new(&[length, ROW_WIDTH], out)?)
}

/// Loads the checkpoint, builds the seed window and returns the unscaled
/// generated rows (the seed itself is not included).
pub fn generate(config: &GenerateConfig) -> Result<NoteMatrix> {
    config.validate()?;
    let ckpt = load_checkpoint(&config.checkpoint_path)?;
    let window = ckpt.params.window;
    let (seed, division) = match &config.seed_source {
        SeedSource::Midi(path) => seed_window_from_midi(path, &ckpt.scaling, window)?,
        SeedSource::Random(seed) => (random_seed_window(*seed, window), ckpt.division),
    };
    let scaled = continue_sequence(&ckpt.params, &seed, config.length)?;
    let rows = (0..config.length)
        .map(|i| unscale(scaled.row(i), &ckpt.scaling))
        .collect();
    Ok(NoteMatrix { rows, division })
}

/// Writes the generated rows as a format-0 file and returns it. Rows are put
/// in canonical order first, so re-reading the file gives back
/// `NoteMatrix::canonical` of the input.
pub fn export(matrix: &NoteMatrix, note_duration_ticks: Option<u32>, path: &Path) -> Result<MidiFile> {
    let duration = note_duration_ticks.unwrap_or_else(|| (u32::from(matrix.division) / 2).max(1));
    let canonical = NoteMatrix::canonical(&matrix.rows, matrix.division);
    let file = matrix_to_midi(&canonical, duration)?;
    fs::write(path, write_midi(&file)?).map_err(|e| Error::io(path, e))?;
    Ok(file)
}

/// `generate` followed by `export` to `config.output_path`.
pub fn generate_to_file(config: &GenerateConfig) -> Result<NoteMatrix> {
    let matrix = generate(config)?;
    export(&matrix, config.note_duration_ticks, &config.output_path)?;
    Ok(matrix)
}
