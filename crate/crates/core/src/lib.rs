//! Soft decoding of JPEG-compressed grayscale images with a pair of residual
//! CNNs, one working on the polyphase packing of the image and one on its
//! one-level Haar sub-bands, averaged at the output.

pub mod corpus;
pub mod error;
pub mod image;
pub mod jpeg;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod tensor;
pub mod transforms;

pub use error::{Error, Result};
pub use image::GrayImage;
pub use jpeg::{build_quant_table, degrade, QuantSpec};
pub use metrics::{psnr, psnr_b, ssim, MetricsReport};
pub use net::{soft_decode, Branch, Decoded, Model, NetworkConfig, QfTag};
pub use pipeline::{train_branch, QfMode, TrainConfig, TrainData};
pub use tensor::{Dtype, Real, Tensor};
pub use transforms::{PackedQuad, Packing};
