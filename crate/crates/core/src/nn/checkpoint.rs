//! Flat binary network checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! b"A7CKPT"            magic
//! u32                  format version (1)
//! u32                  layer count L (affine layers)
//! u32 × (L + 1)        layer sizes
//! per layer: f64 × (out·in) row-major weights, then f64 × out biases
//! ```
//!
//! Activations and dropout rate are not stored; the owner of the network
//! supplies them on load.

use std::path::Path;

use super::{Activation, Mlp};
use crate::{Error, Result};

pub const MAGIC: &[u8; 6] = b"A7CKPT";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(net: &Mlp) -> Vec<u8> {
    let sizes = net.sizes();
    let mut out = Vec::with_capacity(6 + 8 + 4 * sizes.len() + 8 * net.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.num_layers() as u32).to_le_bytes());
    for &s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for &p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint into `(layer sizes, flat parameters)`.
pub fn decode(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let layers = r.u32()? as usize;
    if layers == 0 {
        return Err(Error::Checkpoint("zero layers".into()));
    }
    let sizes = (0..=layers)
        .map(|_| r.u32().map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok((sizes, params))
}

pub fn decode_mlp(bytes: &[u8], output_activation: Activation, dropout_rate: f64) -> Result<Mlp> {
    let (sizes, params) = decode(bytes)?;
    Mlp::from_params(&sizes, output_activation, dropout_rate, params)
}

pub fn save(net: &Mlp, path: &Path) -> Result<()> {
    std::fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path, output_activation: Activation, dropout_rate: f64) -> Result<Mlp> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mlp(&bytes, output_activation, dropout_rate).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
