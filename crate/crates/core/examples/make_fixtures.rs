//! Writes the MIDI fixtures used by the integration tests.
//!
//! ```text
//! cargo run -p notegen-core --example make_fixtures -- crates/core/tests/data
//! ```
//!
//! `pop/` holds three 32-bar format-1 songs (melody + chord tracks, I-V-vi-IV
//! in different keys); `memorize.mid` is a 60-note format-0 melody whose
//! 10-note windows never repeat with different continuations.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use notegen::midi::{EventKind, MidiEvent, MidiTrack, DEFAULT_TEMPO};
use notegen::{write_midi, MidiFile, Rng};

const DIVISION: u16 = 96;
const EIGHTH: u64 = DIVISION as u64 / 2;
const BAR: u64 = 8 * EIGHTH;
const BARS: u64 = 32;

/// (onset tick, duration, pitch, velocity)
type Note = (u64, u64, u8, u8);

fn track(notes: &[Note], tempo: bool) -> MidiTrack {
    // (tick, off-before-on, event)
    let mut timeline: Vec<(u64, u8, EventKind)> = Vec::new();
    if tempo {
        timeline.push((0, 0, EventKind::TempoChange { us_per_quarter: DEFAULT_TEMPO }));
    }
    for &(on, dur, pitch, velocity) in notes {
        timeline.push((on, 1, EventKind::NoteOn { channel: 0, pitch, velocity }));
        timeline.push((on + dur, 0, EventKind::NoteOff { channel: 0, pitch, velocity: 0 }));
    }
    timeline.sort_by_key(|(tick, order, _)| (*tick, *order));
    let mut events = Vec::with_capacity(timeline.len() + 1);
    let mut last = 0;
    for (tick, _, kind) in timeline {
        events.push(MidiEvent::new((tick - last) as u32, kind));
        last = tick;
    }
    events.push(MidiEvent::new(0, EventKind::EndOfTrack));
    MidiTrack { events }
}

fn pop_song(tonic: u8, bars: u64, seed: u64) -> MidiFile {
    let mut rng = Rng::new(seed);
    // Scale degrees of I, V, vi, IV as semitone offsets from the tonic.
    let chords: [[u8; 3]; 4] = [[0, 4, 7], [7, 11, 14], [9, 12, 16], [5, 9, 12]];
    let major = [0u8, 2, 4, 5, 7, 9, 11, 12, 14, 16];
    let mut melody = Vec::new();
    let mut harmony = Vec::new();
    let mut degree = 4usize;
    for bar in 0..bars {
        let start = bar * BAR;
        let chord = chords[(bar % 4) as usize];
        for (i, &off) in chord.iter().enumerate() {
            harmony.push((start, BAR, tonic - 12 + off, 64 + 4 * i as u8));
        }
        harmony.push((start, BAR / 2, tonic - 24 + chord[0], 72));
        let mut tick = start;
        while tick < start + BAR {
            let step = rng.below(5) as isize - 2;
            degree = (degree as isize + step).clamp(0, major.len() as isize - 1) as usize;
            let len = if rng.below(4) == 0 { 2 * EIGHTH } else { EIGHTH };
            let len = len.min(start + BAR - tick);
            melody.push((tick, len, tonic + major[degree], 88 + rng.below(24) as u8));
            tick += len;
        }
    }
    MidiFile {
        format: 1,
        division: DIVISION,
        tracks: vec![
            track(&[], true),
            track(&melody, false),
            track(&harmony, false),
        ],
    }
}

fn memorize_song() -> MidiFile {
    // A 20-note phrase heard three times, velocity alternating per note.
    let phrase = [60u8, 64, 67, 72, 71, 67, 65, 64, 62, 60, 62, 64, 65, 67, 69, 71, 72, 69, 67, 64];
    let gaps = [1u64, 1, 2, 1, 1, 2, 1, 1, 1, 2, 1, 1, 2, 1, 2, 1, 1, 1, 2, 2];
    let mut notes = Vec::new();
    let mut tick = 0;
    for i in 0..60 {
        let k = i % phrase.len();
        notes.push((tick, EIGHTH / 2, phrase[k], [80u8, 100][i % 2]));
        tick += EIGHTH * gaps[k];
    }
    MidiFile {
        format: 0,
        division: DIVISION,
        tracks: vec![track(&notes, true)],
    }
}

fn check_memorizable(file: &MidiFile, window: usize) {
    let (events, _) = notegen::midi::merge_tracks(file);
    let rows = notegen::note_matrix::events_to_matrix(&events, file.division).rows;
    let mut seen = HashMap::new();
    for w in rows.windows(window + 1) {
        if let Some(prev) = seen.insert(&w[..window], w[window]) {
            assert_eq!(prev, w[window], "ambiguous window");
        }
    }
}

fn write(path: &Path, file: &MidiFile) {
    fs::write(path, write_midi(file).expect("valid fixture")).expect("write fixture");
    println!("wrote {}", path.display());
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/core/tests/data".into()));
    let pop = out.join("pop");
    fs::create_dir_all(&pop).expect("create output dir");
    for (i, (name, tonic)) in [("song_c", 60u8), ("song_g", 67), ("song_f", 65)].iter().enumerate() {
        write(&pop.join(format!("{name}.mid")), &pop_song(*tonic, BARS, i as u64 + 1));
    }
    let memorize = memorize_song();
    check_memorizable(&memorize, 10);
    write(&out.join("memorize.mid"), &memorize);
}
