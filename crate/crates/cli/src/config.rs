//! `key = value` config files for `notegen train`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use notegen::TrainConfig;

pub const KEYS: &[&str] = &[
    "data",
    "epochs",
    "window",
    "hidden",
    "dropout",
    "lr",
    "rho",
    "epsilon",
    "batch",
    "seed",
    "clip_norm",
    "out",
    "metrics",
    "histograms",
    "wall_clock",
];

#[derive(Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// unknown or repeated keys are errors.
pub fn parse(text: &str) -> Result<BTreeMap<String, (usize, String)>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ConfigError { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {content:?}")))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(err(format!("unknown key {key:?}")));
        }
        if out.insert(key.clone(), (line, value.trim().to_string())).is_some() {
            return Err(err(format!("{key:?} given twice")));
        }
    }
    Ok(out)
}

fn value<T: std::str::FromStr>(key: &str, line: usize, raw: &str) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| ConfigError {
        line,
        message: format!("bad value {raw:?} for {key}"),
    })
}

/// Applies parsed entries to `config`. Path-valued keys are resolved
/// relative to the config file's directory.
pub fn apply(entries: &BTreeMap<String, (usize, String)>, base: &Path, config: &mut TrainConfig) -> Result<Option<PathBuf>, ConfigError> {
    let mut out = None;
    for (key, (line, raw)) in entries {
        let (line, raw) = (*line, raw.as_str());
        let path = || base.join(raw);
        match key.as_str() {
            "data" => config.corpus_dir = path(),
            "epochs" => config.epochs = value(key, line, raw)?,
            "window" => config.window = value(key, line, raw)?,
            "hidden" => config.hidden = value(key, line, raw)?,
            "dropout" => config.dropout_rate = value(key, line, raw)?,
            "lr" => config.lr = value(key, line, raw)?,
            "rho" => config.rho = value(key, line, raw)?,
            "epsilon" => config.epsilon = value(key, line, raw)?,
            "batch" => config.batch_size = value(key, line, raw)?,
            "seed" => config.seed = value(key, line, raw)?,
            "clip_norm" => {
                config.clip_norm = if raw.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(value(key, line, raw)?)
                }
            }
            "out" => out = Some(path()),
            "metrics" => config.metrics_path = Some(path()),
            "histograms" => config.histogram_path = Some(path()),
            "wall_clock" => config.record_wall_time = value(key, line, raw)?,
            _ => unreachable!("keys are checked while parsing"),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_spacing() {
        let m = parse("# run\nepochs = 3\n\n lr=0.01 # fast\nclip-norm = none\n").unwrap();
        assert_eq!(m["epochs"], (2, "3".to_string()));
        assert_eq!(m["lr"].1, "0.01");
        let mut cfg = TrainConfig::default();
        apply(&m, Path::new("/cfg"), &mut cfg).unwrap();
        assert_eq!((cfg.epochs, cfg.lr, cfg.clip_norm), (3, 0.01, None));
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert_eq!(parse("colour = red").unwrap_err().line, 1);
        assert!(parse("seed = 1\nseed = 2").unwrap_err().message.contains("twice"));
        assert!(parse("\njust words").unwrap_err().message.contains("key = value"));
        let m = parse("epochs = many").unwrap();
        assert!(apply(&m, Path::new("."), &mut TrainConfig::default()).is_err());
    }

    #[test]
    fn paths_are_relative_to_the_file() {
        let m = parse("data = songs\nout = m.ckpt").unwrap();
        let mut cfg = TrainConfig::default();
        let out = apply(&m, Path::new("/runs/a"), &mut cfg).unwrap();
        assert_eq!(cfg.corpus_dir, Path::new("/runs/a/songs"));
        assert_eq!(out.unwrap(), Path::new("/runs/a/m.ckpt"));
    }
}
