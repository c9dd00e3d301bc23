//! Weights file: magic `RISW`, u16 version, u32 input height/width (0 when
//! unknown), u32 layer count, then per layer a u8 tag followed by either
//! `u32 kh, kw, c_in, c_out` and the f64 weights and biases (tag 0) or an
//! f64 dropout rate (tag 1). Little-endian throughout.

use std::fs;
use std::path::Path;

use super::conv::ConvSpec;
use super::model::{Layer, Model};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RISW";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub model: Model,
    /// Spatial input size the model was trained on.
    pub input_hw: Option<(usize, usize)>,
}

pub fn save_weights(path: &Path, file: &WeightsFile) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let (h, w) = file.input_hw.unwrap_or((0, 0));
    for v in [h, w, file.model.layers().len()] {
        buf.extend_from_slice(&u32_of(v)?.to_le_bytes());
    }
    for layer in file.model.layers() {
        match layer {
            Layer::Conv { spec, weight, bias } => {
                buf.push(0);
                for v in [spec.kernel_h, spec.kernel_w, spec.in_channels, spec.out_channels] {
                    buf.extend_from_slice(&u32_of(v)?.to_le_bytes());
                }
                for x in weight.iter().chain(bias) {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
            Layer::Dropout { rate } => {
                buf.push(1);
                buf.extend_from_slice(&rate.to_le_bytes());
            }
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::invalid(format!("{v} does not fit in u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_weights(path: &Path) -> Result<WeightsFile> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        return Err(r.fail("bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let (h, w) = (r.u32()?, r.u32()?);
    let count = r.u32()?;
    let mut layers = Vec::new();
    for _ in 0..count {
        match r.u8()? {
            0 => {
                let spec = ConvSpec {
                    kernel_h: r.u32()?,
                    kernel_w: r.u32()?,
                    in_channels: r.u32()?,
                    out_channels: r.u32()?,
                };
                let expected = spec
                    .weight_len()
                    .checked_add(spec.out_channels)
                    .and_then(|n| n.checked_mul(8))
                    .ok_or_else(|| r.fail("layer size overflows"))?;
                if r.bytes.len() - r.pos < expected {
                    return Err(r.fail("truncated layer payload"));
                }
                let weight = (0..spec.weight_len()).map(|_| r.f64()).collect::<Result<_>>()?;
                let bias = (0..spec.out_channels).map(|_| r.f64()).collect::<Result<_>>()?;
                layers.push(Layer::Conv { spec, weight, bias });
            }
            1 => layers.push(Layer::Dropout { rate: r.f64()? }),
            tag => return Err(r.fail(format!("unknown layer tag {tag}"))),
        }
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes after last layer"));
    }
    let model = Model::from_layers(layers).map_err(|e| r.fail(e.to_string()))?;
    let input_hw = if h == 0 || w == 0 { None } else { Some((h, w)) };
    Ok(WeightsFile { model, input_hw })
}
