//! Tensor file: magic `RIST`, u16 version = 1, u8 rank, u32 dims[rank],
//! then the float32 payload; all little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;

const MAGIC: &[u8; 4] = b"RIST";
const VERSION: u16 = 1;

/// A tensor as stored on disk (single precision).
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl StoredTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dims(&[expected], &[data.len()]));
        }
        if shape.len() > u8::MAX as usize {
            return Err(Error::invalid("tensor rank exceeds 255"));
        }
        Ok(Self { shape, data })
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Self {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&v| v as f64).collect())
    }
}

pub fn encode_tensor(t: &StoredTensor) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(7 + 4 * t.shape.len() + 4 * t.data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(t.shape.len() as u8);
    for &d in &t.shape {
        let d = u32::try_from(d).map_err(|_| Error::invalid(format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in &t.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn save_tensor(path: &Path, t: &StoredTensor) -> Result<()> {
    fs::write(path, encode_tensor(t)?)?;
    Ok(())
}

pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<StoredTensor> {
    let fail = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 7 {
        return Err(fail(format!("header truncated ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let rank = bytes[6] as usize;
    let dims_end = 7 + 4 * rank;
    if bytes.len() < dims_end {
        return Err(fail("dimension list truncated".into()));
    }
    let shape: Vec<usize> = bytes[7..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fail("element count overflows".into()))?;
    let payload = &bytes[dims_end..];
    if Some(payload.len()) != count.checked_mul(4) {
        return Err(fail(format!(
            "header declares {count} elements but payload has {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(StoredTensor { shape, data })
}

pub fn load_tensor(path: &Path) -> Result<StoredTensor> {
    let bytes = fs::read(path)?;
    decode_tensor(&bytes, path)
}
