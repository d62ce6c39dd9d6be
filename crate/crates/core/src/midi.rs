//! Standard MIDI File reader and writer (formats 0 and 1, metrical time).
//!
//! Only what the pipeline needs is interpreted: note on/off, tempo and end of
//! track. Every other meta, sysex or channel event is carried through as raw
//! bytes so a file survives a parse/write cycle.

use thiserror::Error;

/// Tempo assumed when a file never sets one (120 bpm).
pub const DEFAULT_TEMPO: u32 = 500_000;

/// Largest value a four-byte variable-length quantity can hold.
pub const VLQ_MAX: u32 = (1 << 28) - 1;

const META_END_OF_TRACK: u8 = 0x2F;
const META_TEMPO: u8 = 0x51;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MidiError {
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("unsupported MIDI format {0}")]
    UnsupportedFormat(u16),
    #[error("SMPTE time division is not supported")]
    SmpteDivisionUnsupported,
    #[error("truncated chunk: {0}")]
    TruncatedChunk(String),
    #[error("bad event status byte {status:#04x} at offset {offset}")]
    BadEventStatus { status: u8, offset: usize },
    #[error("variable-length quantity not terminated within 4 bytes")]
    UnterminatedVlq,
    #[error("input ended inside a value")]
    TruncatedInput,
    #[error("value {0} does not fit in a variable-length quantity")]
    ValueTooLarge(u32),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiFile {
    /// 0 or 1.
    pub format: u16,
    /// Ticks per quarter note.
    pub division: u16,
    pub tracks: Vec<MidiTrack>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MidiTrack {
    pub events: Vec<MidiEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiEvent {
    /// Ticks since the previous event in the same track.
    pub delta_ticks: u32,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8, velocity: u8 },
    TempoChange { us_per_quarter: u32 },
    EndOfTrack,
    /// Any other meta event, payload without the length prefix.
    OtherMeta { meta_type: u8, data: Vec<u8> },
    /// Any other channel message (data bytes only) or a sysex event
    /// (status `0xF0`/`0xF7`, payload without the length prefix).
    OtherChannel { status: u8, data: Vec<u8> },
}

impl MidiEvent {
    pub fn new(delta_ticks: u32, kind: EventKind) -> Self {
        MidiEvent { delta_ticks, kind }
    }
}

impl MidiTrack {
    /// A track holding only its End-of-Track marker.
    pub fn empty() -> Self {
        MidiTrack {
            events: vec![MidiEvent::new(0, EventKind::EndOfTrack)],
        }
    }
}

/// One note onset on the merged, absolute time line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct AbsoluteNoteEvent {
    pub tick: u64,
    pub pitch: u8,
    pub velocity: u8,
}

// ---------------------------------------------------------------------------
// Variable-length quantities

pub fn decode_vlq(bytes: &[u8]) -> Result<(u32, usize), MidiError> {
    let mut value: u32 = 0;
    for i in 0..4 {
        let b = *bytes.get(i).ok_or(MidiError::TruncatedInput)?;
        value = (value << 7) | u32::from(b & 0x7F);
        if b & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    Err(MidiError::UnterminatedVlq)
}

pub fn encode_vlq(value: u32) -> Result<Vec<u8>, MidiError> {
    if value > VLQ_MAX {
        return Err(MidiError::ValueTooLarge(value));
    }
    let mut groups = vec![(value & 0x7F) as u8];
    let mut rest = value >> 7;
    while rest > 0 {
        groups.push(0x80 | (rest & 0x7F) as u8);
        rest >>= 7;
    }
    groups.reverse();
    Ok(groups)
}

// ---------------------------------------------------------------------------
// Reading

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    /// Offset of `bytes[0]` in the whole file, for diagnostics.
    base: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], base: usize) -> Self {
        Cursor { bytes, pos: 0, base }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| MidiError::TruncatedChunk(format!("event cut off at offset {}", self.offset())))?;
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.remaining() < n {
            return Err(MidiError::TruncatedChunk(format!(
                "needed {n} bytes at offset {}, {} left",
                self.offset(),
                self.remaining()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn vlq(&mut self) -> Result<u32, MidiError> {
        let (v, used) = decode_vlq(&self.bytes[self.pos..]).map_err(|e| match e {
            MidiError::TruncatedInput => {
                MidiError::TruncatedChunk(format!("length cut off at offset {}", self.offset()))
            }
            other => other,
        })?;
        self.pos += used;
        Ok(v)
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }
}

fn read_chunk<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<([u8; 4], &'a [u8], usize), MidiError> {
    if bytes.len() - *pos < 8 {
        return Err(MidiError::TruncatedChunk(format!(
            "chunk header at offset {} needs 8 bytes",
            *pos
        )));
    }
    let tag: [u8; 4] = bytes[*pos..*pos + 4].try_into().expect("4 bytes");
    let len = u32::from_be_bytes(bytes[*pos + 4..*pos + 8].try_into().expect("4 bytes")) as usize;
    let start = *pos + 8;
    if bytes.len() - start < len {
        return Err(MidiError::TruncatedChunk(format!(
            "{} chunk at offset {} declares {len} bytes, {} present",
            String::from_utf8_lossy(&tag),
            *pos,
            bytes.len() - start
        )));
    }
    *pos = start + len;
    Ok((tag, &bytes[start..start + len], start))
}

/// Decodes a Standard MIDI File.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiFile, MidiError> {
    if bytes.len() < 14 || &bytes[..4] != b"MThd" {
        return Err(MidiError::BadHeader("missing MThd chunk".into()));
    }
    let mut pos = 0;
    let (_, header, _) = read_chunk(bytes, &mut pos).map_err(|_| MidiError::BadHeader("short MThd chunk".into()))?;
    if header.len() < 6 {
        return Err(MidiError::BadHeader(format!("MThd length {} < 6", header.len())));
    }
    let format = u16::from_be_bytes([header[0], header[1]]);
    let ntracks = u16::from_be_bytes([header[2], header[3]]) as usize;
    let division = u16::from_be_bytes([header[4], header[5]]);
    if format > 1 {
        return Err(MidiError::UnsupportedFormat(format));
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::SmpteDivisionUnsupported);
    }
    if division == 0 {
        return Err(MidiError::BadHeader("division is zero".into()));
    }
    if format == 0 && ntracks != 1 {
        return Err(MidiError::BadHeader(format!("format 0 with {ntracks} tracks")));
    }

    let mut tracks = Vec::with_capacity(ntracks);
    while tracks.len() < ntracks {
        if pos == bytes.len() {
            return Err(MidiError::TruncatedChunk(format!(
                "header declares {ntracks} tracks, found {}",
                tracks.len()
            )));
        }
        let (tag, body, start) = read_chunk(bytes, &mut pos)?;
        // Alien chunk types are skipped, as the file format requires.
        if &tag == b"MTrk" {
            tracks.push(parse_track(body, start)?);
        }
    }
    Ok(MidiFile {
        format,
        division,
        tracks,
    })
}

fn parse_track(body: &[u8], base: usize) -> Result<MidiTrack, MidiError> {
    let mut cur = Cursor::new(body, base);
    let mut events = Vec::new();
    let mut running: Option<u8> = None;
    while cur.remaining() > 0 {
        let delta = cur.vlq()?;
        let offset = cur.offset();
        let first = cur.peek().ok_or_else(|| MidiError::TruncatedChunk(format!("missing event at offset {offset}")))?;
        let kind = if first & 0x80 == 0 {
            let status = running.ok_or(MidiError::BadEventStatus { status: first, offset })?;
            channel_event(status, &mut cur)?
        } else {
            let status = cur.u8()?;
            match status {
                0xFF => {
                    running = None;
                    let meta_type = cur.u8()?;
                    let len = cur.vlq()? as usize;
                    let data = cur.take(len)?;
                    meta_event(meta_type, data)
                }
                0xF0 | 0xF7 => {
                    running = None;
                    let len = cur.vlq()? as usize;
                    EventKind::OtherChannel {
                        status,
                        data: cur.take(len)?.to_vec(),
                    }
                }
                0x80..=0xEF => {
                    running = Some(status);
                    channel_event(status, &mut cur)?
                }
                _ => return Err(MidiError::BadEventStatus { status, offset }),
            }
        };
        let done = kind == EventKind::EndOfTrack;
        events.push(MidiEvent::new(delta, kind));
        if done {
            // Bytes after End-of-Track are padding.
            return Ok(MidiTrack { events });
        }
    }
    // Tolerate writers that omit the terminator.
    events.push(MidiEvent::new(0, EventKind::EndOfTrack));
    Ok(MidiTrack { events })
}

fn data_byte(cur: &mut Cursor<'_>) -> Result<u8, MidiError> {
    let offset = cur.offset();
    let b = cur.u8()?;
    if b & 0x80 != 0 {
        return Err(MidiError::BadEventStatus { status: b, offset });
    }
    Ok(b)
}

fn channel_event(status: u8, cur: &mut Cursor<'_>) -> Result<EventKind, MidiError> {
    let channel = status & 0x0F;
    Ok(match status & 0xF0 {
        0x80 => {
            let pitch = data_byte(cur)?;
            let velocity = data_byte(cur)?;
            EventKind::NoteOff { channel, pitch, velocity }
        }
        0x90 => {
            let pitch = data_byte(cur)?;
            let velocity = data_byte(cur)?;
            if velocity == 0 {
                EventKind::NoteOff { channel, pitch, velocity: 0 }
            } else {
                EventKind::NoteOn { channel, pitch, velocity }
            }
        }
        0xC0 | 0xD0 => EventKind::OtherChannel {
            status,
            data: vec![data_byte(cur)?],
        },
        _ => EventKind::OtherChannel {
            status,
            data: vec![data_byte(cur)?, data_byte(cur)?],
        },
    })
}

fn meta_event(meta_type: u8, data: &[u8]) -> EventKind {
    match (meta_type, data) {
        (META_END_OF_TRACK, _) => EventKind::EndOfTrack,
        (META_TEMPO, [a, b, c]) => {
            let us = u32::from_be_bytes([0, *a, *b, *c]);
            if us == 0 {
                EventKind::OtherMeta { meta_type, data: data.to_vec() }
            } else {
                EventKind::TempoChange { us_per_quarter: us }
            }
        }
        _ => EventKind::OtherMeta {
            meta_type,
            data: data.to_vec(),
        },
    }
}

// ---------------------------------------------------------------------------
// Writing

fn violation(msg: impl Into<String>) -> MidiError {
    MidiError::InvariantViolation(msg.into())
}

fn check_file(file: &MidiFile) -> Result<(), MidiError> {
    if file.format > 1 {
        return Err(violation(format!("format {} is not 0 or 1", file.format)));
    }
    if file.format == 0 && file.tracks.len() != 1 {
        return Err(violation(format!("format 0 file with {} tracks", file.tracks.len())));
    }
    if file.tracks.len() > usize::from(u16::MAX) {
        return Err(violation("too many tracks"));
    }
    if file.division == 0 || file.division & 0x8000 != 0 {
        return Err(violation(format!("division {} is not a positive tick count", file.division)));
    }
    Ok(())
}

fn write_event(event: &MidiEvent, out: &mut Vec<u8>) -> Result<(), MidiError> {
    out.extend(encode_vlq(event.delta_ticks)?);
    let note = |status: u8, channel: u8, pitch: u8, velocity: u8, out: &mut Vec<u8>| {
        if channel > 15 || pitch > 127 || velocity > 127 {
            return Err(violation(format!(
                "note event out of range: channel {channel}, pitch {pitch}, velocity {velocity}"
            )));
        }
        out.extend([status | channel, pitch, velocity]);
        Ok(())
    };
    match &event.kind {
        EventKind::NoteOn { channel, pitch, velocity } => {
            if *velocity == 0 {
                return Err(violation("NoteOn with velocity 0 must be written as NoteOff"));
            }
            note(0x90, *channel, *pitch, *velocity, out)?;
        }
        EventKind::NoteOff { channel, pitch, velocity } => note(0x80, *channel, *pitch, *velocity, out)?,
        EventKind::TempoChange { us_per_quarter } => {
            if *us_per_quarter == 0 || *us_per_quarter > 0xFF_FFFF {
                return Err(violation(format!("tempo {us_per_quarter} out of range")));
            }
            let b = us_per_quarter.to_be_bytes();
            out.extend([0xFF, META_TEMPO, 3, b[1], b[2], b[3]]);
        }
        EventKind::EndOfTrack => out.extend([0xFF, META_END_OF_TRACK, 0]),
        EventKind::OtherMeta { meta_type, data } => {
            if *meta_type == META_END_OF_TRACK {
                return Err(violation(format!("meta type {meta_type:#04x} not allowed as OtherMeta")));
            }
            if *meta_type == META_TEMPO && data.len() == 3 && data != &[0, 0, 0] {
                return Err(violation("tempo meta must use TempoChange"));
            }
            out.extend([0xFF, *meta_type]);
            out.extend(encode_vlq(len_u32(data.len())?)?);
            out.extend(data);
        }
        EventKind::OtherChannel { status, data } => match status {
            0xF0 | 0xF7 => {
                out.push(*status);
                out.extend(encode_vlq(len_u32(data.len())?)?);
                out.extend(data);
            }
            0xA0..=0xEF => {
                let want = if matches!(status & 0xF0, 0xC0 | 0xD0) { 1 } else { 2 };
                if data.len() != want || data.iter().any(|b| b & 0x80 != 0) {
                    return Err(violation(format!(
                        "channel message {status:#04x} needs {want} data bytes below 0x80"
                    )));
                }
                out.push(*status);
                out.extend(data);
            }
            _ => return Err(violation(format!("status {status:#04x} not allowed as OtherChannel"))),
        },
    }
    Ok(())
}

fn len_u32(len: usize) -> Result<u32, MidiError> {
    u32::try_from(len).map_err(|_| MidiError::ValueTooLarge(u32::MAX))
}

/// Encodes a file. Running status is never used on output.
pub fn write_midi(file: &MidiFile) -> Result<Vec<u8>, MidiError> {
    check_file(file)?;
    let mut out = Vec::new();
    out.extend(b"MThd");
    out.extend(6u32.to_be_bytes());
    out.extend(file.format.to_be_bytes());
    out.extend((file.tracks.len() as u16).to_be_bytes());
    out.extend(file.division.to_be_bytes());

    for (index, track) in file.tracks.iter().enumerate() {
        let eot = track.events.iter().position(|e| e.kind == EventKind::EndOfTrack);
        if eot != Some(track.events.len().wrapping_sub(1)) {
            return Err(violation(format!(
                "track {index} must end with exactly one End-of-Track"
            )));
        }
        let mut body = Vec::new();
        for event in &track.events {
            write_event(event, &mut body)?;
        }
        out.extend(b"MTrk");
        out.extend(len_u32(body.len())?.to_be_bytes());
        out.extend(body);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Track merging

/// Flattens all tracks into note onsets on one absolute time line, sorted by
/// `(tick, pitch)`, and returns the first tempo set at or before the first
/// onset (`DEFAULT_TEMPO` if none).
pub fn merge_tracks(file: &MidiFile) -> (Vec<AbsoluteNoteEvent>, u32) {
    let mut notes = Vec::new();
    let mut tempos: Vec<(u64, usize, u32)> = Vec::new();
    for (t, track) in file.tracks.iter().enumerate() {
        let mut tick = 0u64;
        for event in &track.events {
            tick += u64::from(event.delta_ticks);
            match event.kind {
                EventKind::NoteOn { pitch, velocity, .. } if velocity > 0 => notes.push(AbsoluteNoteEvent {
                    tick,
                    pitch,
                    velocity,
                }),
                EventKind::TempoChange { us_per_quarter } => tempos.push((tick, t, us_per_quarter)),
                _ => {}
            }
        }
    }
    // Stable: equal (tick, pitch) keep track-then-event order.
    notes.sort_by_key(|n| (n.tick, n.pitch));
    tempos.sort_by_key(|&(tick, track, _)| (tick, track));
    let first_note = notes.first().map_or(u64::MAX, |n| n.tick);
    let tempo = tempos
        .iter()
        .take_while(|(tick, _, _)| *tick <= first_note)
        .last()
        .map_or(DEFAULT_TEMPO, |&(_, _, us)| us);
    (notes, tempo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(format: u16, ntracks: u16, division: u16) -> Vec<u8> {
        let mut v = b"MThd".to_vec();
        v.extend(6u32.to_be_bytes());
        v.extend(format.to_be_bytes());
        v.extend(ntracks.to_be_bytes());
        v.extend(division.to_be_bytes());
        v
    }

    fn track(body: &[u8]) -> Vec<u8> {
        let mut v = b"MTrk".to_vec();
        v.extend((body.len() as u32).to_be_bytes());
        v.extend(body);
        v
    }

    #[test]
    fn vlq_examples() {
        assert_eq!(decode_vlq(&[0x00]), Ok((0, 1)));
        assert_eq!(decode_vlq(&[0x81, 0x00]), Ok((128, 2)));
        assert_eq!(decode_vlq(&[0xFF, 0xFF, 0xFF, 0x7F]), Ok((268_435_455, 4)));
        assert_eq!(encode_vlq(0), Ok(vec![0x00]));
        assert_eq!(encode_vlq(127), Ok(vec![0x7F]));
        assert_eq!(encode_vlq(128), Ok(vec![0x81, 0x00]));
        assert_eq!(encode_vlq(VLQ_MAX), Ok(vec![0xFF, 0xFF, 0xFF, 0x7F]));
    }

    #[test]
    fn vlq_errors() {
        assert_eq!(decode_vlq(&[0x80, 0x80, 0x80, 0x80]), Err(MidiError::UnterminatedVlq));
        assert_eq!(decode_vlq(&[]), Err(MidiError::TruncatedInput));
        assert_eq!(decode_vlq(&[0x81]), Err(MidiError::TruncatedInput));
        assert_eq!(encode_vlq(1 << 28), Err(MidiError::ValueTooLarge(1 << 28)));
    }

    #[test]
    fn minimal_file() {
        let mut bytes = header(0, 1, 480);
        bytes.extend(track(&[0x00, 0xFF, 0x2F, 0x00]));
        let file = parse_midi(&bytes).unwrap();
        assert_eq!(
            file,
            MidiFile {
                format: 0,
                division: 480,
                tracks: vec![MidiTrack::empty()],
            }
        );
        assert_eq!(write_midi(&file).unwrap(), bytes);
    }

    #[test]
    fn note_on_velocity_zero_becomes_note_off() {
        let mut bytes = header(0, 1, 480);
        bytes.extend(track(&[
            0x00, 0x90, 60, 64, // NoteOn
            0x83, 0x60, 0x90, 60, 0, // delta 480, NoteOn vel 0
            0x00, 0xFF, 0x2F, 0x00,
        ]));
        let file = parse_midi(&bytes).unwrap();
        let events = &file.tracks[0].events;
        assert_eq!(events.len(), 3);
        assert_eq!(events[0], MidiEvent::new(0, EventKind::NoteOn { channel: 0, pitch: 60, velocity: 64 }));
        assert_eq!(events[1], MidiEvent::new(480, EventKind::NoteOff { channel: 0, pitch: 60, velocity: 0 }));
    }

    #[test]
    fn running_status() {
        let mut bytes = header(0, 1, 96);
        bytes.extend(track(&[
            0x00, 0x91, 60, 100, //
            0x10, 64, 90, // running NoteOn on channel 1
            0x10, 60, 0, // running, velocity 0
            0x00, 0xC1, 5, // program change
            0x00, 7, // running status applies to 1-byte messages too
            0x00, 0xFF, 0x2F, 0x00,
        ]));
        let file = parse_midi(&bytes).unwrap();
        let kinds: Vec<_> = file.tracks[0].events.iter().map(|e| e.kind.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                EventKind::NoteOn { channel: 1, pitch: 60, velocity: 100 },
                EventKind::NoteOn { channel: 1, pitch: 64, velocity: 90 },
                EventKind::NoteOff { channel: 1, pitch: 60, velocity: 0 },
                EventKind::OtherChannel { status: 0xC1, data: vec![5] },
                EventKind::OtherChannel { status: 0xC1, data: vec![7] },
                EventKind::EndOfTrack,
            ]
        );
        // Written back without running status, it still reads the same.
        let again = parse_midi(&write_midi(&file).unwrap()).unwrap();
        assert_eq!(again, file);
    }

    #[test]
    fn running_status_without_prior_status_is_an_error() {
        let mut bytes = header(0, 1, 96);
        bytes.extend(track(&[0x00, 60, 100, 0x00, 0xFF, 0x2F, 0x00]));
        assert!(matches!(parse_midi(&bytes), Err(MidiError::BadEventStatus { status: 60, .. })));
    }

    #[test]
    fn meta_cancels_running_status() {
        let mut bytes = header(0, 1, 96);
        bytes.extend(track(&[0x00, 0x90, 60, 100, 0x00, 0xFF, 0x01, 0x00, 0x00, 60, 0, 0x00, 0xFF, 0x2F, 0x00]));
        assert!(matches!(parse_midi(&bytes), Err(MidiError::BadEventStatus { .. })));
    }

    #[test]
    fn header_errors() {
        assert!(matches!(parse_midi(b"RIFF0000000000"), Err(MidiError::BadHeader(_))));
        assert!(matches!(parse_midi(b"MThd"), Err(MidiError::BadHeader(_))));
        let mut short = b"MThd".to_vec();
        short.extend(4u32.to_be_bytes());
        short.extend([0, 0, 0, 1, 0, 0]);
        assert!(matches!(parse_midi(&short), Err(MidiError::BadHeader(_))));

        let mut f2 = header(2, 1, 96);
        f2.extend(track(&[0x00, 0xFF, 0x2F, 0x00]));
        assert_eq!(parse_midi(&f2), Err(MidiError::UnsupportedFormat(2)));

        let mut smpte = header(0, 1, 0xE728);
        smpte.extend(track(&[0x00, 0xFF, 0x2F, 0x00]));
        assert_eq!(parse_midi(&smpte), Err(MidiError::SmpteDivisionUnsupported));

        let mut zero_tracks = header(0, 0, 96);
        zero_tracks.extend(track(&[0x00, 0xFF, 0x2F, 0x00]));
        assert!(matches!(parse_midi(&zero_tracks), Err(MidiError::BadHeader(_))));
    }

    #[test]
    fn truncation_is_detected() {
        let mut bytes = header(1, 2, 96);
        bytes.extend(track(&[0x00, 0xFF, 0x2F, 0x00]));
        assert!(matches!(parse_midi(&bytes), Err(MidiError::TruncatedChunk(_))));

        let mut cut = header(0, 1, 96);
        let mut t = track(&[0x00, 0x90, 60, 100, 0x00, 0xFF, 0x2F, 0x00]);
        t.truncate(t.len() - 3);
        cut.extend(t);
        assert!(matches!(parse_midi(&cut), Err(MidiError::TruncatedChunk(_))));
    }

    #[test]
    fn event_cannot_read_past_its_chunk() {
        // The NoteOn's data bytes sit outside the declared track length.
        let mut bytes = header(1, 2, 96);
        bytes.extend(track(&[0x00, 0x90]));
        bytes.extend(track(&[60, 100, 0x00, 0xFF, 0x2F, 0x00]));
        assert!(matches!(parse_midi(&bytes), Err(MidiError::TruncatedChunk(_))));
    }

    #[test]
    fn alien_chunks_are_skipped_and_sysex_preserved() {
        let mut bytes = header(0, 1, 96);
        bytes.extend(b"XFIH");
        bytes.extend(3u32.to_be_bytes());
        bytes.extend([1, 2, 3]);
        bytes.extend(track(&[0x00, 0xF0, 0x03, 0x7E, 0x09, 0xF7, 0x00, 0xFF, 0x03, 0x02, b'h', b'i', 0x00, 0xFF, 0x2F, 0x00]));
        let file = parse_midi(&bytes).unwrap();
        assert_eq!(
            file.tracks[0].events[0].kind,
            EventKind::OtherChannel { status: 0xF0, data: vec![0x7E, 0x09, 0xF7] }
        );
        assert_eq!(
            file.tracks[0].events[1].kind,
            EventKind::OtherMeta { meta_type: 0x03, data: b"hi".to_vec() }
        );
        assert_eq!(parse_midi(&write_midi(&file).unwrap()).unwrap(), file);
    }

    #[test]
    fn missing_end_of_track_is_appended() {
        let mut bytes = header(0, 1, 96);
        bytes.extend(track(&[0x00, 0x90, 60, 100]));
        let file = parse_midi(&bytes).unwrap();
        assert_eq!(file.tracks[0].events.last().unwrap().kind, EventKind::EndOfTrack);
    }

    #[test]
    fn writer_rejects_out_of_range_fields() {
        let bad = MidiFile {
            format: 0,
            division: 96,
            tracks: vec![MidiTrack {
                events: vec![
                    MidiEvent::new(0, EventKind::NoteOn { channel: 0, pitch: 128, velocity: 10 }),
                    MidiEvent::new(0, EventKind::EndOfTrack),
                ],
            }],
        };
        assert!(matches!(write_midi(&bad), Err(MidiError::InvariantViolation(_))));

        let no_eot = MidiFile {
            format: 0,
            division: 96,
            tracks: vec![MidiTrack { events: vec![] }],
        };
        assert!(matches!(write_midi(&no_eot), Err(MidiError::InvariantViolation(_))));

        let two_tracks = MidiFile {
            format: 0,
            division: 96,
            tracks: vec![MidiTrack::empty(), MidiTrack::empty()],
        };
        assert!(matches!(write_midi(&two_tracks), Err(MidiError::InvariantViolation(_))));
    }

    #[test]
    fn tempo_parse_and_write() {
        let mut bytes = header(0, 1, 96);
        bytes.extend(track(&[0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20, 0x00, 0xFF, 0x2F, 0x00]));
        let file = parse_midi(&bytes).unwrap();
        assert_eq!(file.tracks[0].events[0].kind, EventKind::TempoChange { us_per_quarter: 500_000 });
        assert_eq!(write_midi(&file).unwrap(), bytes);
    }

    fn note_on(delta: u32, pitch: u8, velocity: u8) -> MidiEvent {
        MidiEvent::new(delta, EventKind::NoteOn { channel: 0, pitch, velocity })
    }

    #[test]
    fn merge_empty_file() {
        let file = MidiFile { format: 0, division: 96, tracks: vec![MidiTrack::empty()] };
        assert_eq!(merge_tracks(&file), (vec![], DEFAULT_TEMPO));
    }

    #[test]
    fn merge_two_tracks() {
        let t1 = MidiTrack {
            events: vec![note_on(0, 60, 90), note_on(480, 62, 90), MidiEvent::new(0, EventKind::EndOfTrack)],
        };
        let t2 = MidiTrack {
            events: vec![
                MidiEvent::new(0, EventKind::TempoChange { us_per_quarter: 400_000 }),
                note_on(240, 48, 70),
                MidiEvent::new(10, EventKind::NoteOff { channel: 0, pitch: 48, velocity: 0 }),
                MidiEvent::new(0, EventKind::EndOfTrack),
            ],
        };
        let file = MidiFile { format: 1, division: 480, tracks: vec![t1, t2] };
        let (notes, tempo) = merge_tracks(&file);
        assert_eq!(notes.iter().map(|n| n.tick).collect::<Vec<_>>(), vec![0, 240, 480]);
        assert_eq!(notes.iter().map(|n| n.pitch).collect::<Vec<_>>(), vec![60, 48, 62]);
        assert_eq!(tempo, 400_000);
    }

    #[test]
    fn merge_ties_break_by_pitch_and_tempo_after_first_note_is_ignored() {
        let t = MidiTrack {
            events: vec![
                note_on(10, 67, 90),
                note_on(0, 60, 90),
                MidiEvent::new(0, EventKind::TempoChange { us_per_quarter: 300_000 }),
                MidiEvent::new(0, EventKind::EndOfTrack),
            ],
        };
        let file = MidiFile { format: 0, division: 96, tracks: vec![t] };
        let (notes, tempo) = merge_tracks(&file);
        assert_eq!(notes.iter().map(|n| n.pitch).collect::<Vec<_>>(), vec![60, 67]);
        // Set at the same tick as the first onset, so it still counts.
        assert_eq!(tempo, 300_000);
    }
}
