use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::corpus::{list_images, Manifest};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::jpeg::{degrade, QuantSpec};
use crate::metrics::MetricsReport;
use crate::net::{branch_estimate, fuse, Model};
use crate::tensor::Real;

#[derive(Debug, Clone)]
pub struct EvalImage {
    pub name: String,
    pub clean: GrayImage,
}

/// Every image in `dir`, cropped to even dimensions.
pub fn load_eval_images(dir: impl AsRef<Path>) -> Result<Vec<EvalImage>> {
    let files = list_images(&dir)?;
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no images found in {}",
            dir.as_ref().display()
        )));
    }
    files
        .iter()
        .map(|p| {
            let img = GrayImage::load(p)?;
            let (h, w) = img.dims();
            Ok(EvalImage {
                name: p
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                clean: img.crop(0, 0, h & !1, w & !1)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Jpeg,
    Pixel,
    Wavelet,
    Fused,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Jpeg, Method::Pixel, Method::Wavelet, Method::Fused];

    pub fn name(self) -> &'static str {
        match self {
            Method::Jpeg => "JPEG",
            Method::Pixel => "P-branch",
            Method::Wavelet => "W-branch",
            Method::Fused => "fused",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub image: String,
    pub qf: u8,
    pub method: Method,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub qfs: Vec<u8>,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn mean(&self, method: Method, qf: u8) -> Option<MetricsReport> {
        let rs: Vec<MetricsReport> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.qf == qf)
            .map(|r| r.report)
            .collect();
        (!rs.is_empty()).then(|| MetricsReport::mean(&rs))
    }

    pub fn methods(&self) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| self.rows.iter().any(|r| r.method == *m))
            .collect()
    }

    /// Methods as rows, quality factors as columns, cells
    /// `psnr/ssim/psnr_b` averaged over images.
    pub fn table_tsv(&self) -> String {
        let mut s = String::from("method");
        for q in &self.qfs {
            let _ = write!(s, "\tqf{q}");
        }
        s.push('\n');
        for m in self.methods() {
            s.push_str(m.name());
            for &q in &self.qfs {
                match self.mean(m, q) {
                    Some(r) => {
                        let _ = write!(s, "\t{:.2}/{:.4}/{:.2}", r.psnr, r.ssim, r.psnr_b);
                    }
                    None => s.push_str("\t-"),
                }
            }
            s.push('\n');
        }
        s
    }

    /// One row per image, quality factor and method.
    pub fn per_image_tsv(&self) -> String {
        let mut s = String::from("image\tqf\tmethod\tpsnr\tssim\tpsnr_b\tseconds\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{:.4}\t{:.6}\t{:.4}\t{:.6}",
                r.image,
                r.qf,
                r.method.name(),
                r.report.psnr,
                r.report.ssim,
                r.report.psnr_b,
                r.report.elapsed
            );
        }
        s
    }
}

fn timed<R>(f: impl FnOnce() -> Result<R>) -> Result<(R, f64)> {
    let t = Instant::now();
    let r = f()?;
    Ok((r, t.elapsed().as_secs_f64()))
}

/// A clean reference and its degraded counterpart.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub name: String,
    pub qf: u8,
    pub clean: GrayImage,
    pub degraded: GrayImage,
}

/// Stored pairs from a manifest, both members cropped to even size.
pub fn load_eval_pairs(manifest: &Manifest) -> Result<Vec<EvalPair>> {
    let even = |img: GrayImage| {
        let (h, w) = img.dims();
        img.crop(0, 0, h & !1, w & !1)
    };
    manifest
        .entries
        .iter()
        .map(|e| {
            Ok(EvalPair {
                name: e
                    .clean
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                qf: e.qf,
                clean: even(GrayImage::load(&e.clean)?)?,
                degraded: even(GrayImage::load(&e.degraded)?)?,
            })
        })
        .collect()
}

/// Score the JPEG baseline and, given a `(pixel, wavelet)` pair, both
/// branch outputs and the fused output on every image at every quality
/// factor. Branch outputs are clamped to [0, 255] before scoring. Elapsed
/// times are per-image decode wall time, with the fused time covering both
/// branches.
pub fn evaluate_corpus<T: Real>(
    models: Option<(&Model<T>, &Model<T>)>,
    images: &[EvalImage],
    qfs: &[u8],
) -> Result<EvalReport> {
    let mut pairs = Vec::with_capacity(images.len() * qfs.len());
    for &qf in qfs {
        let spec = QuantSpec::new(qf)?;
        for img in images {
            pairs.push(EvalPair {
                name: img.name.clone(),
                qf,
                degraded: degrade(&img.clean, &spec),
                clean: img.clean.clone(),
            });
        }
    }
    evaluate_pairs(models, &pairs)
}

/// [`evaluate_corpus`] on already degraded pairs. Table columns follow the
/// order in which quality factors first appear.
pub fn evaluate_pairs<T: Real>(
    models: Option<(&Model<T>, &Model<T>)>,
    pairs: &[EvalPair],
) -> Result<EvalReport> {
    let mut qfs = Vec::new();
    let mut rows = Vec::new();
    for pair in pairs {
        if !qfs.contains(&pair.qf) {
            qfs.push(pair.qf);
        }
        let mut push = |method, test: &GrayImage, elapsed| -> Result<()> {
            let mut report = MetricsReport::compute(&pair.clean, test)?;
            report.elapsed = elapsed;
            rows.push(EvalRow {
                image: pair.name.clone(),
                qf: pair.qf,
                method,
                report,
            });
            Ok(())
        };
        let y = &pair.degraded;
        push(Method::Jpeg, y, 0.0)?;
        if let Some((pixel, wavelet)) = models {
            let (p, tp) = timed(|| branch_estimate(pixel, y))?;
            let (w, tw) = timed(|| branch_estimate(wavelet, y))?;
            let (f, tf) = timed(|| fuse(&p, &w))?;
            push(Method::Pixel, &p.clamped(), tp)?;
            push(Method::Wavelet, &w.clamped(), tw)?;
            push(Method::Fused, &f, tp + tw + tf)?;
        }
    }
    Ok(EvalReport { qfs, rows })
}
