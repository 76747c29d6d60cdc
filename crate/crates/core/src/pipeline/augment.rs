//! Rotation and bicubic downscaling of training images.

use crate::image::GrayImage;

pub const SCALES: [f64; 3] = [1.0, 0.7, 0.5];
/// Variants smaller than this on either axis are dropped.
pub const MIN_SIDE: usize = 62;

/// Rotate clockwise by `quarter_turns * 90` degrees.
pub fn rotate90(image: &GrayImage, quarter_turns: usize) -> GrayImage {
    let (h, w) = image.dims();
    match quarter_turns % 4 {
        0 => image.clone(),
        1 => GrayImage::from_fn(w, h, |y, x| image.get(h - 1 - x, y)),
        2 => GrayImage::from_fn(h, w, |y, x| image.get(h - 1 - y, w - 1 - x)),
        _ => GrayImage::from_fn(w, h, |y, x| image.get(x, w - 1 - y)),
    }
}

/// Keys cubic convolution kernel, a = -0.5.
fn cubic(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        (1.5 * a - 2.5) * a * a + 1.0
    } else if a < 2.0 {
        ((-0.5 * a + 2.5) * a - 4.0) * a + 2.0
    } else {
        0.0
    }
}

fn mirror(i: isize, len: usize) -> usize {
    let n = len as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Per-output-sample `(first input index, weights)` for resampling `len_in`
/// samples to `len_out`, with the kernel widened by the inverse scale when
/// shrinking.
fn contributions(len_in: usize, len_out: usize) -> Vec<(isize, Vec<f64>)> {
    let scale = len_out as f64 / len_in as f64;
    let stretch = if scale < 1.0 { scale } else { 1.0 };
    let support = 2.0 / stretch;
    (0..len_out)
        .map(|o| {
            let u = (o as f64 + 0.5) / scale - 0.5;
            let first = (u - support).floor() as isize;
            let last = (u + support).ceil() as isize;
            let mut ws: Vec<f64> = (first..=last)
                .map(|i| stretch * cubic(stretch * (u - i as f64)))
                .collect();
            let s: f64 = ws.iter().sum();
            ws.iter_mut().for_each(|v| *v /= s);
            (first, ws)
        })
        .collect()
}

/// Antialiased bicubic resize to `height x width`.
pub fn resize_bicubic(image: &GrayImage, height: usize, width: usize) -> GrayImage {
    let (h, w) = image.dims();
    let cols = contributions(w, width);
    let rows = contributions(h, height);
    let horizontal = GrayImage::from_fn(h, width, |y, x| {
        let (first, ws) = &cols[x];
        ws.iter()
            .enumerate()
            .map(|(k, wt)| wt * image.get(y, mirror(first + k as isize, w)))
            .sum()
    });
    GrayImage::from_fn(height, width, |y, x| {
        let (first, ws) = &rows[y];
        ws.iter()
            .enumerate()
            .map(|(k, wt)| wt * horizontal.get(mirror(first + k as isize, h), x))
            .sum()
    })
}

/// Rotations by 0/90/180/270 degrees crossed with downscales by
/// [`SCALES`], rotation-major. Dims are floored to even (by cropping at
/// scale 1, by resampling otherwise), results
/// are rounded to 8-bit levels, and variants under [`MIN_SIDE`] are dropped.
pub fn augment(image: &GrayImage) -> Vec<GrayImage> {
    let mut out = Vec::new();
    for turns in 0..4 {
        let rotated = rotate90(image, turns);
        let (h, w) = rotated.dims();
        for &s in &SCALES {
            let nh = ((h as f64 * s).floor() as usize) & !1;
            let nw = ((w as f64 * s).floor() as usize) & !1;
            if nh < MIN_SIDE || nw < MIN_SIDE {
                continue;
            }
            let v = if s == 1.0 {
                rotated.crop(0, 0, nh, nw).expect("within bounds")
            } else {
                resize_bicubic(&rotated, nh, nw)
            };
            out.push(v.quantized());
        }
    }
    out
}
