//! Dense binary tensor format.
//!
//! Layout, all little endian:
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `MDI1` |
//! | 5 × 8 | shape `T, X, Y, Z, D` as `u64` |
//! | 1 | value type: 0 = `f32`, 1 = `f64` |
//! | 1 | mask flag: 1 if a mask follows the values |
//! | … | values, row-major `(t, x, y, z, d)` |
//! | N | one byte per sample, non-zero = missing (only with the mask flag) |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use mdi_core::{DataTensor, Shape};

use crate::error::{MdiError, Result};

pub const MAGIC: &[u8; 4] = b"MDI1";

/// Storage precision of the values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }
}

pub fn write_tensor<W: Write>(mut w: W, tensor: &DataTensor, dtype: Dtype) -> std::io::Result<()> {
    let s = tensor.shape();
    w.write_all(MAGIC)?;
    for v in [s.t, s.x, s.y, s.z, s.d] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    let masked = tensor.has_mask();
    w.write_all(&[dtype.tag(), u8::from(masked)])?;
    for &v in tensor.values() {
        match dtype {
            Dtype::F32 => w.write_all(&(v as f32).to_le_bytes())?,
            Dtype::F64 => w.write_all(&v.to_le_bytes())?,
        }
    }
    if masked {
        let bytes: Vec<u8> = tensor.mask().iter().map(|&m| u8::from(m)).collect();
        w.write_all(&bytes)?;
    }
    w.flush()
}

pub fn to_bytes(tensor: &DataTensor, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::new();
    write_tensor(&mut out, tensor, dtype).expect("writing to memory cannot fail");
    out
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<DataTensor> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(MdiError::Format(format!("bad magic {magic:?}")));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        let mut b = [0u8; 8];
        read_exact(&mut r, &mut b)?;
        *d = usize::try_from(u64::from_le_bytes(b)).map_err(|_| MdiError::Format("extent overflows usize".into()))?;
    }
    let mut flags = [0u8; 2];
    read_exact(&mut r, &mut flags)?;
    let dtype = match flags[0] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        t => return Err(MdiError::Format(format!("unknown value type tag {t}"))),
    };
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3], dims[4]);
    let count = shape
        .num_samples()
        .checked_mul(shape.d)
        .ok_or_else(|| MdiError::Format("tensor size overflows".into()))?;
    let width = if dtype == Dtype::F32 { 4 } else { 8 };
    let mut raw = vec![0u8; count * width];
    read_exact(&mut r, &mut raw)?;
    let values: Vec<f64> = match dtype {
        Dtype::F32 => raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        Dtype::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    let mask = match flags[1] {
        0 => None,
        1 => {
            let mut m = vec![0u8; shape.num_samples()];
            read_exact(&mut r, &mut m)?;
            Some(m.into_iter().map(|b| b != 0).collect())
        }
        f => return Err(MdiError::Format(format!("unknown mask flag {f}"))),
    };
    Ok(DataTensor::new(shape, values, mask)?)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| MdiError::Format(format!("truncated input: {e}")))
}

pub fn save(path: &Path, tensor: &DataTensor, dtype: Dtype) -> Result<()> {
    let f = File::create(path).map_err(|e| MdiError::io(path, e))?;
    write_tensor(BufWriter::new(f), tensor, dtype).map_err(|e| MdiError::io(path, e))
}

pub fn load(path: &Path) -> Result<DataTensor> {
    let f = File::open(path).map_err(|e| MdiError::io(path, e))?;
    read_tensor(BufReader::new(f))
}
