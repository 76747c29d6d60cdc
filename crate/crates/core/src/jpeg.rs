//! Quantization-domain JPEG degradation for grayscale images.
//!
//! Each 8x8 block is level shifted, transformed with an orthonormal DCT,
//! quantized against a quality-scaled luminance table, dequantized and
//! inverse transformed. Entropy coding is lossless and skipped.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const BLOCK: usize = 8;

/// Annex K luminance quantization table, row-major.
pub const BASE_LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99, //
];

pub type Block = [[f64; BLOCK]; BLOCK];

/// A quality factor and the quantization table it selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantSpec {
    qf: u8,
    table: [u16; 64],
}

impl QuantSpec {
    pub fn new(qf: u8) -> Result<Self> {
        build_quant_table(qf)
    }

    pub fn qf(&self) -> u8 {
        self.qf
    }

    pub fn table(&self) -> &[u16; 64] {
        &self.table
    }
}

/// Scale the base luminance table with the usual quality rule:
/// `5000 / qf` below 50, `200 - 2 qf` otherwise.
pub fn build_quant_table(qf: u8) -> Result<QuantSpec> {
    if !(1..=100).contains(&qf) {
        return Err(Error::invalid(format!(
            "quality factor {qf} out of range; valid range is 1..=100"
        )));
    }
    let qf = u32::from(qf);
    let scale = if qf < 50 { 5000 / qf } else { 200 - 2 * qf };
    let mut table = [0u16; 64];
    for (t, &base) in table.iter_mut().zip(BASE_LUMA_TABLE.iter()) {
        *t = ((u32::from(base) * scale + 50) / 100).clamp(1, 255) as u16;
    }
    Ok(QuantSpec {
        qf: qf as u8,
        table,
    })
}

fn dct_matrix() -> &'static Block {
    static M: OnceLock<Block> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; BLOCK]; BLOCK];
        for (u, row) in m.iter_mut().enumerate() {
            let alpha = if u == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha
                    * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / (2 * BLOCK) as f64)
                        .cos();
            }
        }
        m
    })
}

/// Orthonormal 2D type-II DCT: `C X C^T`.
pub fn block_dct8(block: &Block) -> Block {
    let c = dct_matrix();
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for u in 0..BLOCK {
        for x in 0..BLOCK {
            tmp[u][x] = (0..BLOCK).map(|y| c[u][y] * block[y][x]).sum();
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            out[u][v] = (0..BLOCK).map(|x| tmp[u][x] * c[v][x]).sum();
        }
    }
    out
}

/// Inverse of [`block_dct8`]: `C^T Y C`.
pub fn block_idct8(coeffs: &Block) -> Block {
    let c = dct_matrix();
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for y in 0..BLOCK {
        for v in 0..BLOCK {
            tmp[y][v] = (0..BLOCK).map(|u| c[u][y] * coeffs[u][v]).sum();
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for y in 0..BLOCK {
        for x in 0..BLOCK {
            out[y][x] = (0..BLOCK).map(|v| tmp[y][v] * c[v][x]).sum();
        }
    }
    out
}

fn reflect(i: usize, len: usize) -> usize {
    // symmetric extension: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
    let period = 2 * len;
    let j = i % period;
    if j < len {
        j
    } else {
        period - 1 - j
    }
}

/// Simulate JPEG compression of `image` at `spec`.
///
/// Dimensions that are not multiples of 8 are reflect-padded for coding and
/// cropped afterwards. The result is clamped and rounded to integers, like a
/// baseline decoder's 8-bit output.
pub fn degrade(image: &GrayImage, spec: &QuantSpec) -> GrayImage {
    let (h, w) = image.dims();
    let ph = h.div_ceil(BLOCK) * BLOCK;
    let pw = w.div_ceil(BLOCK) * BLOCK;
    let mut out = GrayImage::filled(h, w, 0.0);
    let table = spec.table();
    for by in (0..ph).step_by(BLOCK) {
        for bx in (0..pw).step_by(BLOCK) {
            let mut block = [[0.0; BLOCK]; BLOCK];
            for (y, row) in block.iter_mut().enumerate() {
                let sy = reflect(by + y, h);
                for (x, v) in row.iter_mut().enumerate() {
                    *v = image.get(sy, reflect(bx + x, w)) - 128.0;
                }
            }
            let mut coeffs = block_dct8(&block);
            for (u, row) in coeffs.iter_mut().enumerate() {
                for (v, c) in row.iter_mut().enumerate() {
                    let q = f64::from(table[u * BLOCK + v]);
                    // f64::round is half-away-from-zero
                    *c = (*c / q).round() * q;
                }
            }
            let rec = block_idct8(&coeffs);
            for (y, row) in rec.iter().enumerate() {
                let oy = by + y;
                if oy >= h {
                    break;
                }
                for (x, &v) in row.iter().enumerate() {
                    let ox = bx + x;
                    if ox >= w {
                        break;
                    }
                    out.set(oy, ox, (v + 128.0).clamp(0.0, 255.0).round());
                }
            }
        }
    }
    out
}
