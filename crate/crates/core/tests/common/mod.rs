#![allow(dead_code)]

use std::path::PathBuf;

use notegen::midi::{EventKind, MidiEvent, MidiFile, MidiTrack, VLQ_MAX};
use notegen::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn bytes(rng: &mut Rng, max_len: u64, high_bit: bool) -> Vec<u8> {
    let len = rng.below(max_len + 1) as usize;
    let mask = if high_bit { 0xFF } else { 0x7F };
    (0..len).map(|_| rng.below(256) as u8 & mask).collect()
}

/// Any event the writer accepts, in the form the parser produces.
pub fn random_event(rng: &mut Rng) -> MidiEvent {
    // Mostly short deltas, with the occasional multi-byte one.
    let delta = match rng.below(4) {
        0 => 0,
        1 | 2 => rng.below(200) as u32,
        _ => rng.below(u64::from(VLQ_MAX) + 1) as u32,
    };
    let channel = rng.below(16) as u8;
    let pitch = rng.below(128) as u8;
    let kind = match rng.below(8) {
        0 | 1 => EventKind::NoteOn {
            channel,
            pitch,
            velocity: 1 + rng.below(127) as u8,
        },
        2 | 3 => EventKind::NoteOff {
            channel,
            pitch,
            velocity: rng.below(128) as u8,
        },
        4 => EventKind::TempoChange {
            us_per_quarter: 1 + rng.below(0xFF_FFFF) as u32,
        },
        5 => {
            // Any meta type except End-of-Track and Set Tempo.
            let mut meta_type = rng.below(256) as u8;
            while meta_type == 0x2F || meta_type == 0x51 {
                meta_type = rng.below(256) as u8;
            }
            EventKind::OtherMeta {
                meta_type,
                data: bytes(rng, 20, true),
            }
        }
        6 => {
            let status = 0xA0 + rng.below(0x50) as u8;
            let len = if matches!(status & 0xF0, 0xC0 | 0xD0) { 1 } else { 2 };
            EventKind::OtherChannel {
                status,
                data: (0..len).map(|_| rng.below(128) as u8).collect(),
            }
        }
        _ => EventKind::OtherChannel {
            status: if rng.below(2) == 0 { 0xF0 } else { 0xF7 },
            data: bytes(rng, 12, true),
        },
    };
    MidiEvent::new(delta, kind)
}

pub fn random_track(rng: &mut Rng, max_events: u64) -> MidiTrack {
    let n = rng.below(max_events + 1);
    let mut events: Vec<MidiEvent> = (0..n).map(|_| random_event(rng)).collect();
    events.push(MidiEvent::new(rng.below(1000) as u32, EventKind::EndOfTrack));
    MidiTrack { events }
}

pub fn random_file(rng: &mut Rng) -> MidiFile {
    let format = rng.below(2) as u16;
    let tracks = if format == 0 { 1 } else { 1 + rng.below(4) as usize };
    MidiFile {
        format,
        division: 1 + rng.below(0x7FFF) as u16,
        tracks: (0..tracks).map(|_| random_track(rng, 40)).collect(),
    }
}
