//! Small synthetic corpora and a tiny training configuration.

#![allow(dead_code)]

use softdecode_core::net::NetworkConfig;
use softdecode_core::pipeline::{QfMode, TrainConfig, TrainData};
use softdecode_core::GrayImage;

/// Smooth gradients, a few edges and some texture, seeded by `k`.
pub fn scene(k: usize, height: usize, width: usize) -> GrayImage {
    let f = 0.05 + 0.03 * k as f64;
    GrayImage::from_fn(height, width, |i, j| {
        let (y, x) = (i as f64, j as f64);
        let base = 128.0 + 60.0 * (f * x).sin() * (0.7 * f * y).cos();
        let edge = if (i / 17 + j / 23 + k).is_multiple_of(3) {
            40.0
        } else {
            -20.0
        };
        let tex = ((i * 7 + j * 13 + k * 31) % 11) as f64 * 2.0;
        (base + edge + tex).clamp(0.0, 255.0).round()
    })
}

pub fn corpus(n: usize, offset: usize, side: usize) -> Vec<(String, GrayImage)> {
    (0..n)
        .map(|k| {
            (
                format!("img{}", k + offset),
                scene(k + offset, side, side + 2),
            )
        })
        .collect()
}

pub fn tiny_data(qf_mode: &QfMode) -> TrainData {
    TrainData::prepare(&corpus(2, 0, 128), &corpus(1, 5, 128), qf_mode).unwrap()
}

pub fn tiny_config(qf_mode: QfMode) -> TrainConfig {
    TrainConfig {
        network: NetworkConfig {
            depth: 3,
            hidden_channels: 4,
            io_channels: 4,
        },
        batch_size: 4,
        max_iterations: 12,
        patches: 32,
        val_patches: 8,
        log_interval: 5,
        seed: 17,
        ..TrainConfig::desk(qf_mode)
    }
}
