use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use notegen::midi::{write_midi, MidiFile, MidiTrack};
use notegen::note_matrix::matrix_to_midi;
use notegen::{NoteMatrix, NoteRow};

fn notegen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_notegen"))
        .args(args)
        .output()
        .expect("run notegen")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn write_song(path: &Path, notes: usize) {
    let rows = (0..notes)
        .map(|i| NoteRow::new(60 + (i % 5) as u8, 70 + (i % 3) as u8 * 10, if i == 0 { 0 } else { 48 }))
        .collect();
    let file = matrix_to_midi(&NoteMatrix { rows, division: 96 }, 24).unwrap();
    fs::write(path, write_midi(&file).unwrap()).unwrap();
}

/// A corpus of two songs (20 and 14 notes).
fn corpus(dir: &Path) -> PathBuf {
    let data = dir.join("songs");
    fs::create_dir(&data).unwrap();
    write_song(&data.join("a.mid"), 20);
    write_song(&data.join("b.mid"), 14);
    data
}

fn tiny_train(dir: &Path, extra: &[&str]) -> Output {
    let data = corpus(dir);
    let mut args = vec![
        "train", "--data", s(&data), "--epochs", "3", "--window", "4", "--hidden", "5", "--batch", "8",
    ];
    args.extend_from_slice(extra);
    notegen(&args)
}

#[test]
fn train_without_data_is_a_usage_error() {
    let o = notegen(&["train", "--epochs", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--data"), "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(notegen(&["train", "--data", ".", "--colour", "red"]).status.code(), Some(2));
    assert_eq!(notegen(&["sing"]).status.code(), Some(2));
}

#[test]
fn metrics_rows_match_epochs_times_batches() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("m.csv");
    let out = dir.path().join("m.ckpt");
    let o = tiny_train(dir.path(), &["--metrics", s(&metrics), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    // (20 - 4) + (14 - 4) = 26 samples → 4 batches of at most 8.
    let text = fs::read_to_string(&metrics).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scope,epoch,batch,loss,accuracy,wall_seconds");
    assert_eq!(lines.len(), 1 + 3 * (4 + 1));
    assert_eq!(stdout(&o).matches("epoch ").count(), 3);
    assert!(out.exists());
}

#[test]
fn same_seed_gives_identical_metrics() {
    let run = |name: &str| {
        let dir = tempfile::tempdir().unwrap();
        let metrics = dir.path().join(name);
        let out = dir.path().join("m.ckpt");
        let o = tiny_train(dir.path(), &["--seed", "42", "--metrics", s(&metrics), "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        (fs::read(metrics).unwrap(), fs::read(out).unwrap())
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!("data = {}\nepochs = 5\nwindow = 4\nhidden = 5\nbatch = 8\nmetrics = from_file.csv\n", s(&data)),
    )
    .unwrap();
    let out = dir.path().join("m.ckpt");
    let o = notegen(&["train", "--config", s(&cfg), "--epochs", "2", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(dir.path().join("from_file.csv")).unwrap();
    // Two epochs from the flag, not five from the file.
    assert_eq!(metrics.lines().count(), 1 + 2 * 5);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "data = .\nspeed = 11\n").unwrap();
    let o = notegen(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("speed"));
}

#[test]
fn empty_corpus_is_a_pipeline_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = notegen(&["train", "--data", s(dir.path()), "--out", s(&dir.path().join("m.ckpt"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no usable notes"));
}

#[test]
fn generate_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.ckpt");
    assert!(tiny_train(dir.path(), &["--out", s(&model)]).status.success());

    let song = dir.path().join("gen.mid");
    let o = notegen(&["generate", "--model", s(&model), "--out", s(&song), "--random-seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("generated 100 notes"));

    let o = notegen(&["inspect", s(&song)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("format: 0\n"));
    assert!(text.contains("division: 96\n"));
    assert!(text.contains("notes: 100\n"), "{text}");

    let seeded = dir.path().join("seeded.mid");
    let seed = dir.path().join("songs/a.mid");
    let o = notegen(&["generate", "--model", s(&model), "--out", s(&seeded), "--seed-midi", s(&seed), "--length", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&notegen(&["inspect", s(&seeded)])).contains("notes: 7\n"));
}

#[test]
fn generate_argument_errors() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.ckpt");
    assert!(tiny_train(dir.path(), &["--out", s(&model)]).status.success());
    let out = dir.path().join("g.mid");

    let o = notegen(&["generate", "--model", s(&model), "--out", s(&out), "--random-seed", "1", "--length", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = notegen(&["generate", "--model", s(&model), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let short = dir.path().join("short.mid");
    write_song(&short, 3);
    let o = notegen(&["generate", "--model", s(&model), "--out", s(&out), "--seed-midi", s(&short)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed has 3 notes"), "{}", stderr(&o));

    let o = notegen(&["generate", "--model", s(&dir.path().join("missing")), "--out", s(&out), "--random-seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn inspect_empty_and_corrupt_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.mid");
    let file = MidiFile {
        format: 0,
        division: 480,
        tracks: vec![MidiTrack::empty()],
    };
    fs::write(&empty, write_midi(&file).unwrap()).unwrap();
    let o = notegen(&["inspect", s(&empty)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("notes: 0\n"));
    assert!(stdout(&o).contains("tracks: 1\n"));

    let corrupt = dir.path().join("bad.mid");
    fs::write(&corrupt, b"MThd\x00\x00\x00\x06\x00\x00").unwrap();
    let o = notegen(&["inspect", s(&corrupt)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));
}

#[test]
fn resume_continues_to_the_epoch_target() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.ckpt");
    let metrics = dir.path().join("m.csv");
    assert!(tiny_train(dir.path(), &["--out", s(&model), "--metrics", s(&metrics)]).status.success());
    let data = dir.path().join("songs");
    let o = notegen(&[
        "train", "--data", s(&data), "--epochs", "5", "--window", "4", "--hidden", "5", "--batch", "8",
        "--out", s(&model), "--metrics", s(&metrics), "--resume", s(&model),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("epoch ").count(), 2);
    assert_eq!(fs::read_to_string(&metrics).unwrap().lines().count(), 1 + 5 * 5);
}
