//! Binary parameter files.
//!
//! Layout (little-endian): magic, `u32` version, `u32` block count, then per
//! block `u32` name length, name bytes, `u8` dtype, `u32` rank, `u64` dims,
//! values.

use std::io::{Read, Write};

use super::{Tensor, TensorError};

pub const PARAM_MAGIC: &[u8; 8] = b"LVSMPRM\0";
pub const PARAM_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F64 => 0,
            Dtype::F32 => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Dtype::F64),
            1 => Some(Dtype::F32),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        NamedTensor {
            name: name.into(),
            tensor,
        }
    }
}

fn io(e: std::io::Error) -> TensorError {
    TensorError::Persist(e.to_string())
}

pub fn write_params<W: Write>(
    mut out: W,
    blocks: &[NamedTensor],
    dtype: Dtype,
) -> Result<(), TensorError> {
    out.write_all(PARAM_MAGIC).map_err(io)?;
    out.write_all(&PARAM_VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(blocks.len() as u32).to_le_bytes())
        .map_err(io)?;
    for b in blocks {
        let name = b.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())
            .map_err(io)?;
        out.write_all(name).map_err(io)?;
        out.write_all(&[dtype.tag()]).map_err(io)?;
        let shape = b.tensor.shape();
        out.write_all(&(shape.len() as u32).to_le_bytes())
            .map_err(io)?;
        for &d in shape {
            out.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
        }
        let mut buf = Vec::with_capacity(b.tensor.numel() * 8);
        for &v in b.tensor.data() {
            match dtype {
                Dtype::F64 => buf.extend_from_slice(&v.to_le_bytes()),
                Dtype::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
        out.write_all(&buf).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], TensorError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(io)?;
    Ok(b)
}

fn read_u32(r: &mut impl Read) -> Result<u32, TensorError> {
    read_array::<4>(r).map(u32::from_le_bytes)
}

pub fn read_params<R: Read>(mut r: R) -> Result<Vec<NamedTensor>, TensorError> {
    let bad = |m: &str| TensorError::Persist(m.to_string());
    if &read_array::<8>(&mut r)? != PARAM_MAGIC {
        return Err(bad("not a parameter file"));
    }
    let version = read_u32(&mut r)?;
    if version != PARAM_VERSION {
        return Err(TensorError::Persist(format!(
            "unsupported version {version}"
        )));
    }
    let count = read_u32(&mut r)?;
    let mut blocks = Vec::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name).map_err(|_| bad("block name is not UTF-8"))?;
        let dtype =
            Dtype::from_tag(read_array::<1>(&mut r)?[0]).ok_or_else(|| bad("unknown dtype tag"))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = u64::from_le_bytes(read_array::<8>(&mut r)?);
            shape.push(usize::try_from(d).map_err(|_| bad("dimension too large"))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad("dimension product overflows"))?;
        let width = match dtype {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        };
        let mut raw = Vec::new();
        (&mut r)
            .take((n * width) as u64)
            .read_to_end(&mut raw)
            .map_err(io)?;
        if raw.len() != n * width {
            return Err(bad("truncated values"));
        }
        let data = match dtype {
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk"))))
                .collect(),
        };
        blocks.push(NamedTensor {
            name,
            tensor: Tensor::new(shape, data)?,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io)? != 0 {
        return Err(bad("trailing bytes after last block"));
    }
    Ok(blocks)
}
