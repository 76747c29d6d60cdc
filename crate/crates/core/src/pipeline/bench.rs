use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::jpeg::{degrade, QuantSpec};
use crate::net::{branch_estimate, soft_decode, Model};
use crate::tensor::Real;

/// Median decode wall times (seconds) for one image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub height: usize,
    pub width: usize,
    pub repeats: usize,
    pub pixel: f64,
    pub wavelet: f64,
    pub fused: f64,
}

impl BenchRow {
    /// Fused time over the mean single-branch time.
    pub fn ratio(&self) -> f64 {
        self.fused / (0.5 * (self.pixel + self.wavelet))
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median wall time of `repeats` calls, after one untimed warm-up call.
fn median_time(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let mut ts = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        ts.push(t.elapsed().as_secs_f64());
    }
    Ok(median(&mut ts))
}

/// Synthetic test content: a smooth gradient with texture, JPEG-degraded.
pub fn bench_image(height: usize, width: usize) -> Result<GrayImage> {
    let img = GrayImage::from_fn(height, width, |y, x| {
        let (fy, fx) = (y as f64, x as f64);
        (128.0 + 60.0 * (fy / 23.0).sin() * (fx / 17.0).cos() + 0.2 * (fx - fy)).clamp(0.0, 255.0)
    });
    Ok(degrade(&img.quantized(), &QuantSpec::new(10)?))
}

/// Median-of-`repeats` timings of each branch alone and of the full fused
/// decode, per size.
pub fn bench_decode<T: Real>(
    pixel: &Model<T>,
    wavelet: &Model<T>,
    sizes: &[(usize, usize)],
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    if repeats == 0 {
        return Err(Error::invalid("repeat count must be positive"));
    }
    sizes
        .iter()
        .map(|&(h, w)| {
            let y = bench_image(h, w)?;
            Ok(BenchRow {
                height: h,
                width: w,
                repeats,
                pixel: median_time(repeats, || branch_estimate(pixel, &y).map(drop))?,
                wavelet: median_time(repeats, || branch_estimate(wavelet, &y).map(drop))?,
                fused: median_time(repeats, || soft_decode(pixel, wavelet, &y).map(drop))?,
            })
        })
        .collect()
}

pub fn bench_tsv(rows: &[BenchRow]) -> String {
    let mut s = String::from("height\twidth\trepeats\tpixel_s\twavelet_s\tfused_s\tratio\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.3}",
            r.height,
            r.width,
            r.repeats,
            r.pixel,
            r.wavelet,
            r.fused,
            r.ratio()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even_single() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut [7.0]), 7.0);
    }
}
