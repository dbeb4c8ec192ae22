//! Binary parameter container.
//!
//! Layout (little-endian): magic `FQMX`, `u32` version, `u32` tensor count,
//! then per tensor: `u32` name length, UTF-8 name, `u32` rank, `u64` per
//! dimension, and the `f64` values in row-major order. A tensor named
//! `meta` holds the network sizes and the demand scale of the encoder.

use std::path::Path;

use ndarray::Array2;

use super::params::{Dims, QmixParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FQMX";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: QmixParams,
    /// Divisor applied to demand volumes in observations.
    pub volume_scale: f64,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], values: impl Iterator<Item = f64>) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len() as u32);
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = &self.params.dims;
        let named = self.params.named();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, named.len() as u32 + 1);
        let meta = [
            d.obs_len as f64,
            d.num_actions as f64,
            d.num_agents as f64,
            d.state_len as f64,
            d.hidden as f64,
            d.mix_hidden as f64,
            self.volume_scale,
        ];
        put_tensor(&mut out, "meta", &[meta.len()], meta.into_iter());
        for (name, t) in named {
            put_tensor(&mut out, &name, t.shape(), t.iter().copied());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("missing FQMX magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            if n > (buf.len() - r.pos) / 8 {
                return Err(Error::Checkpoint(format!("tensor {name} larger than the file")));
            }
            let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.push((name, shape, values));
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes after the last tensor".into()));
        }
        let meta = tensors
            .iter()
            .find(|t| t.0 == "meta")
            .ok_or_else(|| Error::Checkpoint("missing meta tensor".into()))?;
        if meta.2.len() != 7 {
            return Err(Error::Checkpoint("meta tensor must hold 7 values".into()));
        }
        let m = &meta.2;
        let dims = Dims {
            obs_len: m[0] as usize,
            num_actions: m[1] as usize,
            num_agents: m[2] as usize,
            state_len: m[3] as usize,
            hidden: m[4] as usize,
            mix_hidden: m[5] as usize,
        };
        if dims.num_actions < 1 || dims.num_agents < 1 || dims.hidden < 1 {
            return Err(Error::Checkpoint("meta sizes must be positive".into()));
        }
        let volume_scale = m[6];
        let mut params = QmixParams::zeros(dims);
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let (_, shape, values) = tensors
                .iter()
                .find(|t| &t.0 == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if shape.as_slice() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {shape:?}, expected {:?}",
                    slot.shape()
                )));
            }
            *slot = Array2::from_shape_vec(slot.raw_dim(), values.clone()).expect("shape checked");
        }
        Ok(Self { params, volume_scale })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
