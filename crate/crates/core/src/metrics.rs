//! PSNR, SSIM and PSNR-B for 8-bit grayscale images.

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Reported in place of +inf for identical images.
pub const PSNR_CAP: f64 = 99.0;
pub const PEAK: f64 = 255.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Coding block size assumed by [`psnr_b`].
pub const BLOCK: usize = 8;

/// PSNR / SSIM / PSNR-B triple plus the wall time it refers to.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_b: f64,
    pub elapsed: f64,
}

impl MetricsReport {
    /// All three metrics of `test` against `reference`.
    pub fn compute(reference: &GrayImage, test: &GrayImage) -> Result<Self> {
        Ok(MetricsReport {
            psnr: psnr(reference, test)?,
            ssim: ssim(reference, test)?,
            psnr_b: psnr_b(reference, test)?,
            elapsed: 0.0,
        })
    }

    pub fn mean(reports: &[MetricsReport]) -> MetricsReport {
        if reports.is_empty() {
            return MetricsReport::default();
        }
        let n = reports.len() as f64;
        let sum = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        MetricsReport {
            psnr: sum(|r| r.psnr),
            ssim: sum(|r| r.ssim),
            psnr_b: sum(|r| r.psnr_b),
            elapsed: sum(|r| r.elapsed),
        }
    }
}

fn same_dims(op: &'static str, x: &GrayImage, y: &GrayImage) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::shape(
            op,
            &[x.height(), x.width()],
            &[y.height(), y.width()],
        ));
    }
    Ok(())
}

pub fn mse(x: &GrayImage, y: &GrayImage) -> Result<f64> {
    same_dims("mse", x, y)?;
    let sum: f64 = x
        .pixels()
        .iter()
        .zip(y.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.pixels().len() as f64)
}

fn db(err: f64) -> f64 {
    if err <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (PEAK * PEAK / err).log10()).min(PSNR_CAP)
    }
}

/// `10 log10(255^2 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(x: &GrayImage, y: &GrayImage) -> Result<f64> {
    Ok(db(mse(x, y)?))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "valid" Gaussian filter of `src` (h x w) to
/// `(h - 10) x (w - 10)`.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW)
                .map(|i| k[i] * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5).
pub fn ssim(x: &GrayImage, y: &GrayImage) -> Result<f64> {
    same_dims("ssim", x, y)?;
    let (h, w) = x.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let k = gaussian_window();
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let (xs, ys) = (x.pixels(), y.pixels());
    let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(xs, h, w, &k);
    let mu_y = filter_valid(ys, h, w, &k);
    let e_xx = filter_valid(&xx, h, w, &k);
    let e_yy = filter_valid(&yy, h, w, &k);
    let e_xy = filter_valid(&xy, h, w, &k);
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sxx = e_xx[i] - mx * mx;
        let syy = e_yy[i] - my * my;
        let sxy = e_xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
            / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    }
    Ok(total / mu_x.len() as f64)
}

/// Blocking-effect factor of `y` for block size `block`.
pub fn blocking_effect_factor(y: &GrayImage, block: usize) -> f64 {
    let (h, w) = y.dims();
    let (mut sum_b, mut n_b, mut sum_c, mut n_c) = (0.0, 0usize, 0.0, 0usize);
    let mut add = |d: f64, boundary: bool| {
        if boundary {
            sum_b += d * d;
            n_b += 1;
        } else {
            sum_c += d * d;
            n_c += 1;
        }
    };
    for r in 0..h {
        for c in 0..w - 1 {
            add(y.get(r, c) - y.get(r, c + 1), (c + 1) % block == 0);
        }
    }
    for r in 0..h - 1 {
        for c in 0..w {
            add(y.get(r, c) - y.get(r + 1, c), (r + 1) % block == 0);
        }
    }
    let d_b = if n_b > 0 { sum_b / n_b as f64 } else { 0.0 };
    let d_c = if n_c > 0 { sum_c / n_c as f64 } else { 0.0 };
    if d_b > d_c {
        let eta = (block as f64).log2() / (h.min(w) as f64).log2();
        eta * (d_b - d_c)
    } else {
        0.0
    }
}

/// PSNR-B of `test` against `reference`; the blocking penalty is measured on
/// `test` only, so argument order matters.
pub fn psnr_b(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    same_dims("psnr_b", reference, test)?;
    let (h, w) = test.dims();
    if h <= BLOCK || w <= BLOCK {
        return Err(Error::invalid(format!(
            "psnr_b needs more than {BLOCK} pixels per axis, got {h}x{w}"
        )));
    }
    Ok(db(
        mse(reference, test)? + blocking_effect_factor(test, BLOCK)
    ))
}
