use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::net::Branch;
use crate::tensor::Tensor;

/// Side of a packed training patch.
pub const PATCH: usize = 31;

/// Co-located degraded/clean windows of one packed image pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    /// Degraded input, `1 x 4 x p x p`, intensities in [0, 255].
    pub y: Tensor<f64>,
    /// Clean target.
    pub x: Tensor<f64>,
    pub branch: Branch,
    pub qf: u8,
    /// Top-left corner in the packed (half-resolution) grid.
    pub origin: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Every window on a regular grid, row-major.
    Grid { stride: usize },
    /// Uniformly random corners.
    Random,
}

fn window(t: &Tensor<f64>, top: usize, left: usize, size: usize) -> Tensor<f64> {
    let w = t.width();
    Tensor::from_fn([1, 4, size, size], |_, c, y, x| {
        t.plane(0, c)[(top + y) * w + left + x]
    })
}

/// Cut up to `count` co-located `size x size` windows from the packed pair.
///
/// Grid sampling yields the first `count` grid windows, random sampling
/// draws exactly `count` corners from a generator seeded with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn extract_pairs(
    clean: &GrayImage,
    degraded: &GrayImage,
    branch: Branch,
    qf: u8,
    size: usize,
    count: usize,
    sampling: Sampling,
    seed: u64,
) -> Result<Vec<PatchPair>> {
    if clean.dims() != degraded.dims() {
        return Err(Error::shape(
            "extract_pairs",
            &[clean.height(), clean.width()],
            &[degraded.height(), degraded.width()],
        ));
    }
    clean.ensure_even()?;
    let (h, w) = (clean.height() / 2, clean.width() / 2);
    if h < size || w < size {
        return Err(Error::invalid(format!(
            "image {}x{} is too small for {size}x{size} packed patches",
            clean.height(),
            clean.width()
        )));
    }
    let xs = branch.packing().pack(clean)?.into_tensor();
    let ys = branch.packing().pack(degraded)?.into_tensor();
    let corners: Vec<(usize, usize)> = match sampling {
        Sampling::Grid { stride } => {
            if stride == 0 {
                return Err(Error::invalid("grid stride must be positive"));
            }
            (0..=h - size)
                .step_by(stride)
                .flat_map(|t| (0..=w - size).step_by(stride).map(move |l| (t, l)))
                .take(count)
                .collect()
        }
        Sampling::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    (
                        rng.random_range(0..=h - size),
                        rng.random_range(0..=w - size),
                    )
                })
                .collect()
        }
    };
    Ok(corners
        .into_iter()
        .map(|(t, l)| PatchPair {
            y: window(&ys, t, l, size),
            x: window(&xs, t, l, size),
            branch,
            qf,
            origin: (t, l),
        })
        .collect())
}
