//! Binary checkpoint format (little-endian throughout).
//!
//! ```text
//! offset  size  field
//!      0     8  magic "SDNCKPT\0"
//!      8     4  version (u32, currently 1)
//!     12     4  element width in bytes (u32, 4 = f32, 8 = f64)
//!     16     4  branch (u32, 0 = pixel, 1 = wavelet)
//!     20     4  quality factor (u32, 1..=100, 0 = blind)
//!     24     4  depth D (u32)
//!     28     4  hidden channels (u32)
//!     32     4  io channels (u32)
//!     36     8  training iteration (u64)
//!     44     8  batch-norm epsilon (f64)
//!     52     8  batch-norm running-stat momentum (f64)
//!     60     .  per block, in order:
//!                 conv weights (out * in * 9 elements, OIHW)
//!                 final block only: bias (out elements)
//!                 other blocks: gamma, beta, running mean, running var
//!                 (hidden elements each)
//!    end-8   8  FNV-1a 64 checksum of every preceding byte
//! ```

use std::path::Path;

use super::model::{Branch, Model, NetworkConfig, QfTag};
use crate::error::{Error, Result};
use crate::image::write_atomic;
use crate::tensor::{BatchNorm, Conv2d, Dtype, Real, Tensor};

pub const MAGIC: &[u8; 8] = b"SDNCKPT\0";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 60;
pub const CHECKSUM_LEN: usize = 8;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Number of stored elements for a configuration.
pub fn element_count(config: &NetworkConfig) -> usize {
    let weights: usize = config.conv_shapes().iter().map(|(i, o)| i * o * 9).sum();
    weights + config.io_channels + (config.depth - 1) * 4 * config.hidden_channels
}

pub fn encoded_len(config: &NetworkConfig, dtype: Dtype) -> usize {
    HEADER_LEN + element_count(config) * dtype.size() + CHECKSUM_LEN
}

pub fn encode<T: Real>(model: &Model<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(&model.config, T::DTYPE));
    out.extend_from_slice(MAGIC);
    let u32s = [
        VERSION,
        T::DTYPE.size() as u32,
        model.branch.code(),
        model.qf.code(),
        model.config.depth as u32,
        model.config.hidden_channels as u32,
        model.config.io_channels as u32,
    ];
    for v in u32s {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&model.iteration.to_le_bytes());
    let (eps, mom) = model
        .blocks
        .iter()
        .find_map(|b| b.bn.as_ref())
        .map(|bn| (bn.eps.as_f64(), bn.momentum.as_f64()))
        .unwrap_or((crate::tensor::BN_EPSILON, crate::tensor::BN_MOMENTUM));
    out.extend_from_slice(&eps.to_le_bytes());
    out.extend_from_slice(&mom.to_le_bytes());
    let put = |out: &mut Vec<u8>, xs: &[T]| xs.iter().for_each(|&v| v.write_le(out));
    for block in &model.blocks {
        put(&mut out, block.conv.weights().data());
        match &block.bn {
            Some(bn) => {
                put(&mut out, &bn.gamma);
                put(&mut out, &bn.beta);
                put(&mut out, &bn.running_mean);
                put(&mut out, &bn.running_var);
            }
            None => put(&mut out, block.conv.bias().unwrap_or(&[])),
        }
    }
    let sum = fnv1a64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

/// Header fields, readable without decoding the payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub dtype: Dtype,
    pub branch: Branch,
    pub qf: QfTag,
    pub config: NetworkConfig,
    pub iteration: u64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Checkpoint {
            path: self.path.to_path_buf(),
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!(
                "truncated: needed {n} more bytes, file has {}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn values<T: Real>(&mut self, dtype: Dtype, n: usize) -> Result<Vec<T>> {
        let raw = self.take(n * dtype.size())?;
        Ok(raw
            .chunks_exact(dtype.size())
            .map(|c| match dtype {
                Dtype::F32 => T::from_f64(f32::read_le(c) as f64),
                Dtype::F64 => T::from_f64(f64::read_le(c)),
            })
            .collect())
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<Header> {
    if r.take(8)? != MAGIC {
        r.pos = 0;
        return Err(r.err("bad magic, not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        r.pos -= 4;
        return Err(r.err(format!("unsupported version {version}, expected {VERSION}")));
    }
    let dtype = match r.u32()? {
        4 => Dtype::F32,
        8 => Dtype::F64,
        other => {
            r.pos -= 4;
            return Err(r.err(format!("unknown element width {other}")));
        }
    };
    let branch = Branch::from_code(r.u32()?).ok_or_else(|| {
        r.pos -= 4;
        r.err("unknown branch code")
    })?;
    let qf = QfTag::from_code(r.u32()?).ok_or_else(|| {
        r.pos -= 4;
        r.err("quality factor out of range")
    })?;
    let config = NetworkConfig {
        depth: r.u32()? as usize,
        hidden_channels: r.u32()? as usize,
        io_channels: r.u32()? as usize,
    };
    if let Err(e) = config.validate() {
        r.pos -= 12;
        return Err(r.err(e.to_string()));
    }
    let iteration = r.u64()?;
    let bn_eps = r.f64()?;
    let bn_momentum = r.f64()?;
    Ok(Header {
        dtype,
        branch,
        qf,
        config,
        iteration,
        bn_eps,
        bn_momentum,
    })
}

pub fn decode<T: Real>(bytes: &[u8], path: &Path) -> Result<Model<T>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    let header = read_header(&mut r)?;
    let expected = encoded_len(&header.config, header.dtype);
    if bytes.len() != expected {
        r.pos = bytes.len().min(expected);
        return Err(r.err(format!(
            "length {} does not match the {expected} bytes implied by the header",
            bytes.len()
        )));
    }
    let body = &bytes[..expected - CHECKSUM_LEN];
    let stored = u64::from_le_bytes(bytes[expected - CHECKSUM_LEN..].try_into().unwrap());
    if fnv1a64(body) != stored {
        r.pos = expected - CHECKSUM_LEN;
        return Err(r.err("checksum mismatch"));
    }
    let dt = header.dtype;
    let mut model = Model::<T>::zeros(header.config, header.branch, header.qf)?;
    model.iteration = header.iteration;
    for block in &mut model.blocks {
        let (cin, cout) = (block.conv.in_channels(), block.conv.out_channels());
        let weights = Tensor::from_vec([cout, cin, 3, 3], r.values(dt, cout * cin * 9)?)?;
        match &mut block.bn {
            Some(bn) => {
                block.conv = Conv2d::from_parts(weights, None)?;
                *bn = BatchNorm {
                    gamma: r.values(dt, cout)?,
                    beta: r.values(dt, cout)?,
                    running_mean: r.values(dt, cout)?,
                    running_var: r.values(dt, cout)?,
                    eps: T::from_f64(header.bn_eps),
                    momentum: T::from_f64(header.bn_momentum),
                };
            }
            None => {
                block.conv = Conv2d::from_parts(weights, Some(r.values(dt, cout)?))?;
            }
        }
    }
    Ok(model)
}

pub fn peek_header(path: impl AsRef<Path>) -> Result<Header> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_header(&mut Reader {
        bytes: &bytes,
        pos: 0,
        path,
    })
}

pub fn save_checkpoint<T: Real>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode(model))
}

/// Load a checkpoint into precision `T`. Parameters stored at a different
/// width are converted.
pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Model<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
