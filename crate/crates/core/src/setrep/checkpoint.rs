//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "STWCKPT\0"
//! version    u32       1
//! meta_len   u64       length of the JSON metadata that follows
//! meta       bytes     UTF-8 JSON: architecture, config, ρ input width,
//!                      head kind, output affine map
//! count      u32       number of tensors
//! tensor × count:
//!   label_len u32, label (UTF-8, e.g. "phi2.layer0.weight", "alpha[1,2]")
//!   rank      u32
//!   dims      u64 × rank
//!   data      f64 × product(dims)
//! ```
//!
//! Tensors appear in the fixed parameter order (banks, coefficients, ρ), so
//! writing the same model twice yields identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Architecture, SetTwisterConfig};
use super::model::{OutputAffine, SetModelParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"STWCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub arch: Architecture,
    pub config: SetTwisterConfig,
    pub rho_input: usize,
    /// What the model is used for, e.g. `sequence` or `node`.
    pub head: String,
    #[serde(default)]
    pub output: OutputAffine,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint(w: &mut impl Write, meta: &CheckpointMeta, params: &SetModelParams) -> Result<()> {
    params.check(meta.arch, &meta.config, meta.rho_input)?;
    let io = |e| Error::io("<checkpoint>", e);
    let meta_json = serde_json::to_vec(meta)?;
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(meta_json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&meta_json).map_err(io)?;
    let labels = params.labels();
    w.write_all(&(labels.len() as u32).to_le_bytes()).map_err(io)?;
    for (label, t) in labels.iter().zip(params.iter()) {
        w.write_all(&(label.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(label.as_bytes()).map_err(io)?;
        w.write_all(&(t.rank() as u32).to_le_bytes()).map_err(io)?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
        }
        for &x in t.data() {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

struct Cursor<'a, R: Read> {
    r: &'a mut R,
}

impl<R: Read> Cursor<'_, R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.r
            .read_exact(&mut buf)
            .map_err(|e| bad(format!("truncated: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<(CheckpointMeta, SetModelParams)> {
    let mut c = Cursor { r };
    if c.bytes(8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let meta_len = c.u64()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(&c.bytes(meta_len)?)?;
    let mut params = SetModelParams::init(
        meta.arch,
        &meta.config,
        meta.rho_input,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    let labels = params.labels();
    let count = c.u32()? as usize;
    if count != labels.len() {
        return Err(bad(format!("{count} tensors, config implies {}", labels.len())));
    }
    for (want, t) in labels.iter().zip(params.iter_mut()) {
        let len = c.u32()? as usize;
        let label = String::from_utf8(c.bytes(len)?).map_err(|_| bad("label is not UTF-8"))?;
        if &label != want {
            return Err(bad(format!("found tensor `{label}` where `{want}` was expected")));
        }
        let rank = c.u32()? as usize;
        let dims = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims != t.shape() {
            return Err(bad(format!("`{label}` has shape {dims:?}, expected {:?}", t.shape())));
        }
        let data = (0..t.numel()).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        *t = Tensor::new(dims, data)?.with_grad();
    }
    let mut trailing = [0u8; 1];
    if c.r.read(&mut trailing).map_err(|e| bad(e.to_string()))? != 0 {
        return Err(bad("trailing bytes after the last tensor"));
    }
    Ok((meta, params))
}

pub fn save_checkpoint(path: &Path, meta: &CheckpointMeta, params: &SetModelParams) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, meta, params)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, SetModelParams)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(f))
}
