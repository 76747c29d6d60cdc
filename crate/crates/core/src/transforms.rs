//! Reversible image to four-channel packings.
//!
//! * Polyphase: the four 2x2 lattice phases become channels (space to depth).
//! * Wavelet: one level of the orthonormal Haar DWT, sub-bands stacked as
//!   LL, LH, HL, HH. "LH" is lowpass along rows and highpass along columns.
//!
//! A [`PackedQuad`] remembers which packing produced it so the wrong inverse
//! is an error instead of silent corruption.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Packing {
    Polyphase,
    Wavelet,
}

impl Packing {
    pub fn name(self) -> &'static str {
        match self {
            Packing::Polyphase => "pixel-polyphase",
            Packing::Wavelet => "wavelet-subband",
        }
    }

    pub fn pack(self, image: &GrayImage) -> Result<PackedQuad> {
        match self {
            Packing::Polyphase => polyphase_pack(image),
            Packing::Wavelet => dwt_pack(image),
        }
    }
}

/// A `1 x 4 x m/2 x n/2` tensor tagged with the packing that made it.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedQuad {
    tensor: Tensor<f64>,
    origin: Packing,
}

impl PackedQuad {
    pub fn new(tensor: Tensor<f64>, origin: Packing) -> Result<Self> {
        let [n, c, _, _] = tensor.shape();
        if n != 1 || c != 4 {
            let [_, _, h, w] = tensor.shape();
            return Err(Error::shape("PackedQuad", &[1, 4, h, w], &tensor.shape()));
        }
        Ok(PackedQuad { tensor, origin })
    }

    pub fn tensor(&self) -> &Tensor<f64> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<f64> {
        self.tensor
    }

    pub fn origin(&self) -> Packing {
        self.origin
    }

    pub fn unpack(&self) -> Result<GrayImage> {
        match self.origin {
            Packing::Polyphase => polyphase_unpack(self),
            Packing::Wavelet => dwt_unpack(self),
        }
    }

    fn expect(&self, origin: Packing) -> Result<()> {
        if self.origin != origin {
            return Err(Error::Origin {
                expected: origin.name(),
                found: self.origin.name(),
            });
        }
        Ok(())
    }
}

fn half_dims(image: &GrayImage) -> Result<(usize, usize)> {
    image.ensure_even()?;
    Ok((image.height() / 2, image.width() / 2))
}

/// Channel `2 * dy + dx` holds the pixels at `(2i + dy, 2j + dx)`.
pub fn polyphase_pack(image: &GrayImage) -> Result<PackedQuad> {
    let (h, w) = half_dims(image)?;
    let t = Tensor::from_fn([1, 4, h, w], |_, c, i, j| {
        image.get(2 * i + c / 2, 2 * j + c % 2)
    });
    PackedQuad::new(t, Packing::Polyphase)
}

pub fn polyphase_unpack(packed: &PackedQuad) -> Result<GrayImage> {
    packed.expect(Packing::Polyphase)?;
    let t = &packed.tensor;
    let (h, w) = (t.height(), t.width());
    Ok(GrayImage::from_fn(2 * h, 2 * w, |y, x| {
        t.get(0, 2 * (y % 2) + x % 2, y / 2, x / 2)
    }))
}

/// One-level separable Haar analysis: rows first, then columns.
pub fn dwt_pack(image: &GrayImage) -> Result<PackedQuad> {
    let (h, w) = half_dims(image)?;
    let width = image.width();
    // row pass: lowpass / highpass along each row
    let mut lo = vec![0.0; 2 * h * w];
    let mut hi = vec![0.0; 2 * h * w];
    for y in 0..2 * h {
        for j in 0..w {
            let a = image.pixels()[y * width + 2 * j];
            let b = image.pixels()[y * width + 2 * j + 1];
            lo[y * w + j] = (a + b) * FRAC_1_SQRT_2;
            hi[y * w + j] = (a - b) * FRAC_1_SQRT_2;
        }
    }
    let mut t = Tensor::zeros([1, 4, h, w]);
    for i in 0..h {
        for j in 0..w {
            let (l0, l1) = (lo[2 * i * w + j], lo[(2 * i + 1) * w + j]);
            let (h0, h1) = (hi[2 * i * w + j], hi[(2 * i + 1) * w + j]);
            t.set(0, 0, i, j, (l0 + l1) * FRAC_1_SQRT_2);
            t.set(0, 1, i, j, (l0 - l1) * FRAC_1_SQRT_2);
            t.set(0, 2, i, j, (h0 + h1) * FRAC_1_SQRT_2);
            t.set(0, 3, i, j, (h0 - h1) * FRAC_1_SQRT_2);
        }
    }
    PackedQuad::new(t, Packing::Wavelet)
}

pub fn dwt_unpack(packed: &PackedQuad) -> Result<GrayImage> {
    packed.expect(Packing::Wavelet)?;
    let t = &packed.tensor;
    let (h, w) = (t.height(), t.width());
    let mut img = GrayImage::filled(2 * h, 2 * w, 0.0);
    for i in 0..h {
        for j in 0..w {
            let (ll, lh, hl, hh) = (
                t.get(0, 0, i, j),
                t.get(0, 1, i, j),
                t.get(0, 2, i, j),
                t.get(0, 3, i, j),
            );
            // undo the column pass
            let l0 = (ll + lh) * FRAC_1_SQRT_2;
            let l1 = (ll - lh) * FRAC_1_SQRT_2;
            let h0 = (hl + hh) * FRAC_1_SQRT_2;
            let h1 = (hl - hh) * FRAC_1_SQRT_2;
            // then the row pass
            img.set(2 * i, 2 * j, (l0 + h0) * FRAC_1_SQRT_2);
            img.set(2 * i, 2 * j + 1, (l0 - h0) * FRAC_1_SQRT_2);
            img.set(2 * i + 1, 2 * j, (l1 + h1) * FRAC_1_SQRT_2);
            img.set(2 * i + 1, 2 * j + 1, (l1 - h1) * FRAC_1_SQRT_2);
        }
    }
    Ok(img)
}
