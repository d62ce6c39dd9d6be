//! The note matrix: one `(pitch, velocity, inter-onset ticks)` row per note
//! onset, its scaling into `[0, 1]`, and windowing into training samples.

use crate::error::{Error, Result};
use crate::midi::{AbsoluteNoteEvent, EventKind, MidiError, MidiEvent, MidiFile, MidiTrack, DEFAULT_TEMPO};
use crate::numerics::{Rng, Tensor};

/// Width of one scaled row.
pub const ROW_WIDTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoteRow {
    pub pitch: u8,
    /// 1..=127; silent onsets never make it into a matrix.
    pub velocity: u8,
    /// Ticks since the previous onset, 0 for the first row.
    pub dt_ticks: u32,
}

impl NoteRow {
    pub fn new(pitch: u8, velocity: u8, dt_ticks: u32) -> Self {
        NoteRow {
            pitch,
            velocity,
            dt_ticks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoteMatrix {
    pub rows: Vec<NoteRow>,
    /// Ticks per quarter note of the source.
    pub division: u16,
}

impl NoteMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Puts arbitrary rows into the order a MIDI round trip produces: the
    /// first onset at tick 0 and simultaneous onsets sorted by pitch.
    pub fn canonical(rows: &[NoteRow], division: u16) -> NoteMatrix {
        let mut tick = 0u64;
        let mut events: Vec<AbsoluteNoteEvent> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if i > 0 {
                    tick += u64::from(row.dt_ticks);
                }
                AbsoluteNoteEvent {
                    tick,
                    pitch: row.pitch,
                    velocity: row.velocity,
                }
            })
            .collect();
        events.sort_by_key(|e| (e.tick, e.pitch));
        events_to_matrix(&events, division)
    }
}

/// Maps note rows into `[0, 1]`: pitch and velocity over 127, inter-onset
/// time over the largest gap seen in the training corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalingParams {
    pub dt_max_ticks: u32,
}

impl ScalingParams {
    pub const PITCH_DIVISOR: u32 = 127;
    pub const VELOCITY_DIVISOR: u32 = 127;

    pub fn new(dt_max_ticks: u32) -> Self {
        ScalingParams {
            dt_max_ticks: dt_max_ticks.max(1),
        }
    }
}

/// One training example: `window` scaled rows and the row that follows them.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[window, 3]`
    pub input: Tensor,
    /// `[3]`
    pub target: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[batch, window, 3]`
    pub inputs: Tensor,
    /// `[batch, 3]`
    pub targets: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.targets.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Turns time-sorted onsets into rows of inter-onset differences.
pub fn events_to_matrix(events: &[AbsoluteNoteEvent], division: u16) -> NoteMatrix {
    let mut previous = events.first().map_or(0, |e| e.tick);
    let rows = events
        .iter()
        .map(|e| {
            // Gaps beyond u32 cannot be written back anyway; saturate.
            let dt = u32::try_from(e.tick.saturating_sub(previous)).unwrap_or(u32::MAX);
            previous = e.tick;
            NoteRow::new(e.pitch, e.velocity, dt)
        })
        .collect();
    NoteMatrix { rows, division }
}

pub fn fit_scaling(matrices: &[NoteMatrix]) -> Result<ScalingParams> {
    if matrices.iter().all(NoteMatrix::is_empty) {
        return Err(Error::EmptyCorpus);
    }
    let dt_max = matrices
        .iter()
        .flat_map(|m| m.rows.iter().map(|r| r.dt_ticks))
        .max()
        .unwrap_or(0);
    Ok(ScalingParams::new(dt_max))
}

pub fn scale_row(row: &NoteRow, params: &ScalingParams) -> [f64; ROW_WIDTH] {
    let dt_max = params.dt_max_ticks;
    [
        f64::from(row.pitch) / f64::from(ScalingParams::PITCH_DIVISOR),
        f64::from(row.velocity) / f64::from(ScalingParams::VELOCITY_DIVISOR),
        f64::from(row.dt_ticks.min(dt_max)) / f64::from(dt_max),
    ]
}

/// `[T, 3]` tensor of scaled rows.
pub fn scale(matrix: &NoteMatrix, params: &ScalingParams) -> Tensor {
    let data = matrix
        .rows
        .iter()
        .flat_map(|r| scale_row(r, params))
        .collect();
    Tensor::new(&[matrix.len(), ROW_WIDTH], data).expect("row width is fixed")
}

/// Inverse of [`scale_row`] for any real triple; values are clamped to
/// `[0, 1]` and velocity is floored at 1.
pub fn unscale(row: &[f64], params: &ScalingParams) -> NoteRow {
    assert_eq!(row.len(), ROW_WIDTH, "a scaled row has {ROW_WIDTH} entries");
    let q = |x: f64, steps: u32| (clamp_unit(x) * f64::from(steps)).round();
    NoteRow {
        pitch: q(row[0], ScalingParams::PITCH_DIVISOR) as u8,
        velocity: (q(row[1], ScalingParams::VELOCITY_DIVISOR) as u8).max(1),
        dt_ticks: q(row[2], params.dt_max_ticks) as u32,
    }
}

/// Clamps to `[0, 1]`, mapping NaN to 0.
pub fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Slides a window over a `[T, 3]` sequence. Sample `i` reads rows
/// `i..i + window` and predicts row `i + window`.
pub fn make_samples(scaled: &Tensor, window: usize) -> Vec<Sample> {
    assert!(window >= 1, "window must be positive");
    let rows = scaled.shape()[0];
    let width = scaled.shape()[1];
    let data = scaled.data();
    (0..rows.saturating_sub(window))
        .map(|i| Sample {
            input: Tensor::new(&[window, width], data[i * width..(i + window) * width].to_vec())
                .expect("window slice"),
            target: Tensor::new(&[width], scaled.row(i + window).to_vec()).expect("row slice"),
        })
        .collect()
}

/// Shuffles the samples with `rng` and cuts them into batches of
/// `batch_size`; the last batch may be short.
pub fn make_batches(samples: &[Sample], batch_size: usize, rng: &mut Rng) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..samples.len()).collect();
    rng.shuffle(&mut order);
    order
        .chunks(batch_size)
        .map(|chunk| {
            let first = &samples[chunk[0]];
            let (window, width) = (first.input.shape()[0], first.input.shape()[1]);
            let mut inputs = Vec::with_capacity(chunk.len() * window * width);
            let mut targets = Vec::with_capacity(chunk.len() * width);
            for &i in chunk {
                inputs.extend_from_slice(samples[i].input.data());
                targets.extend_from_slice(samples[i].target.data());
            }
            Batch {
                inputs: Tensor::new(&[chunk.len(), window, width], inputs).expect("uniform samples"),
                targets: Tensor::new(&[chunk.len(), width], targets).expect("uniform samples"),
            }
        })
        .collect()
}

/// Renders a matrix as a format-0 file: a tempo event, then for every row a
/// NoteOn at its onset and a NoteOff `note_duration_ticks` later.
pub fn matrix_to_midi(matrix: &NoteMatrix, note_duration_ticks: u32) -> Result<MidiFile, MidiError> {
    if note_duration_ticks == 0 {
        return Err(MidiError::InvariantViolation("note duration must be at least one tick".into()));
    }
    // (tick, off-before-on, row index, event)
    let mut timeline: Vec<(u64, u8, usize, EventKind)> = Vec::with_capacity(2 * matrix.len());
    let mut onset = 0u64;
    for (i, row) in matrix.rows.iter().enumerate() {
        if row.pitch > 127 || row.velocity == 0 || row.velocity > 127 {
            return Err(MidiError::InvariantViolation(format!(
                "row {i} out of range: pitch {}, velocity {}",
                row.pitch, row.velocity
            )));
        }
        if i > 0 {
            onset += u64::from(row.dt_ticks);
        }
        timeline.push((
            onset,
            1,
            i,
            EventKind::NoteOn {
                channel: 0,
                pitch: row.pitch,
                velocity: row.velocity,
            },
        ));
        timeline.push((
            onset + u64::from(note_duration_ticks),
            0,
            i,
            EventKind::NoteOff {
                channel: 0,
                pitch: row.pitch,
                velocity: 0,
            },
        ));
    }
    timeline.sort_by_key(|&(tick, order, i, _)| (tick, order, i));

    let mut events = vec![MidiEvent::new(
        0,
        EventKind::TempoChange {
            us_per_quarter: DEFAULT_TEMPO,
        },
    )];
    let mut last = 0u64;
    for (tick, _, _, kind) in timeline {
        let delta = u32::try_from(tick - last).map_err(|_| MidiError::ValueTooLarge(u32::MAX))?;
        events.push(MidiEvent::new(delta, kind));
        last = tick;
    }
    events.push(MidiEvent::new(0, EventKind::EndOfTrack));
    Ok(MidiFile {
        format: 0,
        division: matrix.division,
        tracks: vec![MidiTrack { events }],
    })
}
