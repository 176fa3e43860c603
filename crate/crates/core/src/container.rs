//! The `APMT` tensor container.
//!
//! Layout, all little-endian: magic `APMT`, `u32` version (1), `u32` tensor
//! count, then per tensor a `u16` name length, the UTF-8 name, a `u8` dtype
//! (0 = f32, 1 = f64, 2 = c64 as interleaved f32 pairs), a `u8` rank, one
//! `u64` per dimension, and the row-major payload.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, RealTensor};

pub const MAGIC: &[u8; 4] = b"APMT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    F32(RealTensor),
    F64(RealTensor),
    C64(ComplexTensor),
}

impl StoredTensor {
    fn dtype(&self) -> u8 {
        match self {
            StoredTensor::F32(_) => 0,
            StoredTensor::F64(_) => 1,
            StoredTensor::C64(_) => 2,
        }
    }

    fn shape(&self) -> &[usize] {
        match self {
            StoredTensor::F32(t) | StoredTensor::F64(t) => t.shape(),
            StoredTensor::C64(t) => t.shape(),
        }
    }
}

pub fn encode(entries: &[(String, StoredTensor)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, tensor) in entries {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidInput(format!("tensor name too long: {} bytes", name.len())))?;
        let ndim = u8::try_from(tensor.shape().len())
            .map_err(|_| Error::InvalidInput(format!("tensor `{name}` has too many dimensions")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.dtype());
        out.push(ndim);
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match tensor {
            StoredTensor::F32(t) => t
                .data()
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            StoredTensor::F64(t) => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            StoredTensor::C64(t) => t.data().iter().for_each(|z| {
                out.extend_from_slice(&(z.re as f32).to_le_bytes());
                out.extend_from_slice(&(z.im as f32).to_le_bytes());
            }),
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                location: format!("offset {}", self.pos),
                reason: format!("truncated {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn err(&self, reason: String) -> Error {
        Error::Parse {
            location: format!("offset {}", self.pos),
            reason,
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, StoredTensor)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Parse {
            location: "offset 0".into(),
            reason: "missing APMT magic".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let count = r.u32("tensor count")? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| r.err("tensor name is not UTF-8".into()))?
            .to_string();
        let dtype = r.u8("dtype")?;
        let ndim = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64("dimension")? as usize);
        }
        let count: usize = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| r.err(format!("tensor `{name}` is too large")))?;
        let tensor = match dtype {
            0 => {
                let raw = r.take(count.saturating_mul(4), "f32 payload")?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                    .collect();
                StoredTensor::F32(RealTensor::new(shape, data)?)
            }
            1 => {
                let raw = r.take(count.saturating_mul(8), "f64 payload")?;
                let data = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                StoredTensor::F64(RealTensor::new(shape, data)?)
            }
            2 => {
                let raw = r.take(count.saturating_mul(8), "c64 payload")?;
                let data = raw
                    .chunks_exact(8)
                    .map(|c| {
                        let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
                        let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
                        Complex64::new(re.into(), im.into())
                    })
                    .collect();
                StoredTensor::C64(ComplexTensor::new(shape, data)?)
            }
            other => return Err(r.err(format!("unknown dtype {other} for `{name}`"))),
        };
        entries.push((name, tensor));
    }
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(entries)
}
