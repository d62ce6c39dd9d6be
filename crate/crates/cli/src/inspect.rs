//! Text summary of a MIDI file for `notegen inspect`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use notegen::midi::merge_tracks;
use notegen::note_matrix::events_to_matrix;
use notegen::MidiFile;

/// How many of the most frequent inter-onset gaps to list.
const TOP_GAPS: usize = 8;

pub fn summarize(file: &MidiFile) -> String {
    let (events, tempo) = merge_tracks(file);
    let matrix = events_to_matrix(&events, file.division);
    let mut s = String::new();
    let _ = writeln!(s, "format: {}", file.format);
    let _ = writeln!(s, "division: {}", file.division);
    let _ = writeln!(s, "tracks: {}", file.tracks.len());
    let _ = writeln!(s, "tempo: {tempo} us/quarter");
    let _ = writeln!(s, "notes: {}", matrix.len());
    let pitches = matrix.rows.iter().map(|r| r.pitch);
    match (pitches.clone().min(), pitches.max()) {
        (Some(lo), Some(hi)) => {
            let _ = writeln!(s, "pitch range: {lo}-{hi}");
        }
        _ => {
            let _ = writeln!(s, "pitch range: none");
        }
    }
    if matrix.len() < 2 {
        let _ = writeln!(s, "dt ticks: none");
        return s;
    }
    // The first row's gap is always 0 and says nothing about the rhythm.
    let mut gaps: Vec<u32> = matrix.rows[1..].iter().map(|r| r.dt_ticks).collect();
    gaps.sort_unstable();
    let _ = writeln!(
        s,
        "dt ticks: min {} median {} max {}",
        gaps[0],
        gaps[gaps.len() / 2],
        gaps[gaps.len() - 1]
    );
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for g in &gaps {
        *counts.entry(*g).or_default() += 1;
    }
    let mut by_count: Vec<(u32, usize)> = counts.into_iter().collect();
    by_count.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let _ = writeln!(s, "dt histogram:");
    for (gap, count) in by_count.iter().take(TOP_GAPS) {
        let _ = writeln!(s, "  {gap:>6} {count}");
    }
    if by_count.len() > TOP_GAPS {
        let rest: usize = by_count[TOP_GAPS..].iter().map(|(_, c)| c).sum();
        let _ = writeln!(s, "  other  {rest}");
    }
    s
}
