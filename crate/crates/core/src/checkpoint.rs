//! Versioned binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "NGCKPT01"                       magic
//! u32  version (= 1)
//! u64  window, hidden, input_dim, output_dim
//! f64  dropout_rate
//! u32  division
//! u32  pitch divisor, velocity divisor, dt_max_ticks
//! f64  lr, rho, epsilon
//! u64  epoch
//! u64  rng state
//! u32  tensor count (= 10: five model tensors, then five RMSprop accumulators)
//! per tensor: u32 rank, rank × u64 extents, extents-product × f64
//! ```
//!
//! Floats are stored bit-for-bit, so a reload reproduces the exact model.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{DenseParams, LstmParams, ModelConfig, ModelParams, PARAM_TENSORS};
use crate::note_matrix::ScalingParams;
use crate::numerics::Tensor;
use crate::optim::{RmspropConfig, RmspropState};

pub const MAGIC: &[u8; 8] = b"NGCKPT01";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub optimizer: RmspropState,
    pub scaling: ScalingParams,
    /// Ticks per quarter note used when generating without a seed file.
    pub division: u16,
    pub rng_state: u64,
    /// Completed training epochs.
    pub epoch: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.params.config();
        let mut out = Vec::new();
        out.extend(MAGIC);
        out.extend(VERSION.to_le_bytes());
        for v in [cfg.window, cfg.hidden, cfg.input_dim, cfg.output_dim] {
            out.extend((v as u64).to_le_bytes());
        }
        out.extend(cfg.dropout_rate.to_le_bytes());
        out.extend(u32::from(self.division).to_le_bytes());
        for v in [
            ScalingParams::PITCH_DIVISOR,
            ScalingParams::VELOCITY_DIVISOR,
            self.scaling.dt_max_ticks,
        ] {
            out.extend(v.to_le_bytes());
        }
        let opt = self.optimizer.config;
        for v in [opt.lr, opt.rho, opt.epsilon] {
            out.extend(v.to_le_bytes());
        }
        out.extend(self.epoch.to_le_bytes());
        out.extend(self.rng_state.to_le_bytes());
        let tensors: Vec<&Tensor> = self
            .params
            .tensors()
            .into_iter()
            .chain(self.optimizer.mean_square.iter())
            .collect();
        out.extend((tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend((t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend((d as u64).to_le_bytes());
            }
            for &x in t.data() {
                out.extend(x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)?[..6] != MAGIC[..6] {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let window = r.usize()?;
        let hidden = r.usize()?;
        let input_dim = r.usize()?;
        let output_dim = r.usize()?;
        let dropout_rate = r.f64()?;
        let config = ModelConfig {
            input_dim,
            hidden,
            output_dim,
            window,
            dropout_rate,
        };
        config.validate().map_err(|e| corrupt(format!("config: {e}")))?;
        let division = u16::try_from(r.u32()?).map_err(|_| corrupt("division out of range"))?;
        let (pitch_div, vel_div, dt_max) = (r.u32()?, r.u32()?, r.u32()?);
        if pitch_div != ScalingParams::PITCH_DIVISOR || vel_div != ScalingParams::VELOCITY_DIVISOR || dt_max == 0 {
            return Err(corrupt("scaling parameters"));
        }
        let optimizer_config = RmspropConfig {
            lr: r.f64()?,
            rho: r.f64()?,
            epsilon: r.f64()?,
        };
        let epoch = r.u64()?;
        let rng_state = r.u64()?;
        let count = r.u32()? as usize;
        if count != 2 * PARAM_TENSORS {
            return Err(corrupt(format!("expected {} tensors, found {count}", 2 * PARAM_TENSORS)));
        }

        let expected: [Vec<usize>; PARAM_TENSORS] = [
            vec![input_dim, 4 * hidden],
            vec![hidden, 4 * hidden],
            vec![4 * hidden],
            vec![hidden, output_dim],
            vec![output_dim],
        ];
        let mut tensors = Vec::with_capacity(count);
        for i in 0..count {
            let t = r.tensor()?;
            let want = &expected[i % PARAM_TENSORS];
            if t.shape() != want.as_slice() {
                return Err(corrupt(format!("tensor {i} has shape {:?}, expected {want:?}", t.shape())));
            }
            tensors.push(t);
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }

        let mean_square = tensors.split_off(PARAM_TENSORS);
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("count checked");
        let params = ModelParams {
            lstm: LstmParams {
                kernel: next(),
                recurrent_kernel: next(),
                bias: next(),
            },
            dense: DenseParams {
                weights: next(),
                bias: next(),
            },
            window,
            dropout_rate,
        };
        Ok(Checkpoint {
            params,
            optimizer: RmspropState {
                config: optimizer_config,
                mean_square,
            },
            scaling: ScalingParams { dt_max_ticks: dt_max },
            division,
            rng_state,
            epoch,
        })
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(corrupt(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("extent too large"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        if rank == 0 || rank > 3 {
            return Err(corrupt(format!("tensor rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.usize()?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.bytes.len() - self.pos))
            .ok_or_else(|| corrupt("tensor data truncated"))?;
        let data = self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Tensor::new(&shape, data)?)
    }
}

/// Writes through a temporary file and a rename so readers never see a
/// partial checkpoint.
pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, checkpoint.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
