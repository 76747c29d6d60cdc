use super::model::{Branch, Model};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::tensor::{Real, Tensor};
use crate::transforms::PackedQuad;

/// Pack `image` into the branch domain. Networks work on raw 8-bit
/// intensity units.
pub fn to_network_input<T: Real>(image: &GrayImage, branch: Branch) -> Result<Tensor<T>> {
    Ok(branch.packing().pack(image)?.tensor().cast())
}

/// Inverse of [`to_network_input`].
pub fn from_network_output<T: Real>(tensor: &Tensor<T>, branch: Branch) -> Result<GrayImage> {
    PackedQuad::new(tensor.cast(), branch.packing())?.unpack()
}

/// Unclamped estimate of one branch for a full image.
pub fn branch_estimate<T: Real>(model: &Model<T>, degraded: &GrayImage) -> Result<GrayImage> {
    degraded.ensure_even()?;
    let input = to_network_input::<T>(degraded, model.branch)?;
    let residual = model.infer(&input)?;
    from_network_output(&input.add(&residual)?, model.branch)
}

#[derive(Debug, Clone)]
pub struct Decoded {
    /// Average of both branches, clamped to [0, 255].
    pub fused: GrayImage,
    /// Unclamped branch estimates.
    pub pixel: GrayImage,
    pub wavelet: GrayImage,
}

/// Run both branches on `degraded` and average them.
pub fn soft_decode<T: Real>(
    pixel: &Model<T>,
    wavelet: &Model<T>,
    degraded: &GrayImage,
) -> Result<Decoded> {
    if pixel.branch != Branch::Pixel {
        return Err(Error::Branch {
            model: pixel.branch.name(),
            data: Branch::Pixel.name(),
        });
    }
    if wavelet.branch != Branch::Wavelet {
        return Err(Error::Branch {
            model: wavelet.branch.name(),
            data: Branch::Wavelet.name(),
        });
    }
    let p = branch_estimate(pixel, degraded)?;
    let w = branch_estimate(wavelet, degraded)?;
    Ok(Decoded {
        fused: fuse(&p, &w)?,
        pixel: p,
        wavelet: w,
    })
}

pub fn fuse(pixel: &GrayImage, wavelet: &GrayImage) -> Result<GrayImage> {
    if pixel.dims() != wavelet.dims() {
        return Err(Error::shape(
            "fuse",
            &[pixel.height(), pixel.width()],
            &[wavelet.height(), wavelet.width()],
        ));
    }
    let px: Vec<f64> = pixel
        .pixels()
        .iter()
        .zip(wavelet.pixels())
        .map(|(a, b)| (0.5 * a + 0.5 * b).clamp(0.0, 255.0))
        .collect();
    GrayImage::new(pixel.height(), pixel.width(), px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetworkConfig, QfTag};

    fn zero_model(branch: Branch) -> Model<f64> {
        let cfg = NetworkConfig {
            depth: 2,
            hidden_channels: 2,
            io_channels: 4,
        };
        Model::zeros(cfg, branch, QfTag::Dedicated(10)).unwrap()
    }

    #[test]
    fn zero_networks_return_the_input() {
        let y = GrayImage::from_fn(8, 10, |r, c| ((r * 31 + c * 17) % 256) as f64);
        let d = soft_decode(&zero_model(Branch::Pixel), &zero_model(Branch::Wavelet), &y).unwrap();
        for (a, b) in d.fused.pixels().iter().zip(y.pixels()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn branches_must_match_roles() {
        let y = GrayImage::filled(8, 8, 1.0);
        let p = zero_model(Branch::Pixel);
        assert!(matches!(soft_decode(&p, &p, &y), Err(Error::Branch { .. })));
    }

    #[test]
    fn odd_input_rejected() {
        let y = GrayImage::filled(7, 8, 1.0);
        let r = soft_decode(&zero_model(Branch::Pixel), &zero_model(Branch::Wavelet), &y);
        assert!(r.unwrap_err().to_string().contains("even"));
    }

    #[test]
    fn fusion_clamps() {
        let a = GrayImage::filled(2, 2, 300.0);
        let b = GrayImage::filled(2, 2, 250.0);
        assert_eq!(fuse(&a, &b).unwrap().pixels()[0], 255.0);
        let c = GrayImage::filled(2, 2, -40.0);
        assert_eq!(
            fuse(&c, &GrayImage::filled(2, 2, 20.0)).unwrap().pixels()[0],
            0.0
        );
    }
}
