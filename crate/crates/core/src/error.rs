use std::path::PathBuf;

use thiserror::Error;

use crate::midi::MidiError;
use crate::numerics::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Midi(#[from] MidiError),
    #[error("corpus contains no usable notes")]
    EmptyCorpus,
    #[error("no training samples: every sequence is shorter than window + 1 ({window} + 1)")]
    NoSamples { window: usize },
    #[error("dropout rate {0} is outside [0, 1)")]
    BadRate(f64),
    #[error("cache does not match this call: {0}")]
    CacheMismatch(String),
    #[error("gradient contains NaN or infinity")]
    NonFiniteGradient,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("seed has {found} notes but the model window needs {needed}")]
    SeedTooShort { needed: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("metrics output: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
