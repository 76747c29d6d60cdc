//! Inputs shared by the kernel benchmarks.

use softdecode_core::net::{Branch, Model, NetworkConfig, QfTag};
use softdecode_core::tensor::Tensor;
use softdecode_core::GrayImage;

/// Deterministic image with smooth structure and fine texture.
pub fn sample_image(height: usize, width: usize) -> GrayImage {
    GrayImage::from_fn(height, width, |y, x| {
        let v = 128.0 + 60.0 * (y as f64 / 19.0).sin() * (x as f64 / 11.0).cos();
        (v + ((y * 13 + x * 7) % 17) as f64)
            .clamp(0.0, 255.0)
            .round()
    })
}

pub fn sample_tensor(shape: [usize; 4]) -> Tensor<f32> {
    Tensor::from_fn(shape, |n, c, y, x| {
        ((n * 31 + c * 17 + y * 7 + x * 3) % 23) as f32 / 23.0 - 0.5
    })
}

pub fn desk_pair() -> (Model<f32>, Model<f32>) {
    let qf = QfTag::Dedicated(10);
    (
        Model::init(NetworkConfig::DESK, Branch::Pixel, qf, 1).expect("desk config"),
        Model::init(NetworkConfig::DESK, Branch::Wavelet, qf, 2).expect("desk config"),
    )
}
