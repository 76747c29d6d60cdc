//! Single-channel raster images and 8-bit PNG/PGM I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// Grayscale image with real-valued intensities, nominally in `[0, 255]`.
#[derive(Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({}x{})", self.height, self.width)
    }
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if pixels.len() != height * width {
            return Err(Error::shape(
                "GrayImage::new",
                &[height * width],
                &[pixels.len()],
            ));
        }
        Ok(GrayImage {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0);
        GrayImage {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0);
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(y, x));
            }
        }
        GrayImage {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn clamped(&self) -> GrayImage {
        self.map(|v| v.clamp(0.0, 255.0))
    }

    /// Clamp and round to the 8-bit lattice.
    pub fn quantized(&self) -> GrayImage {
        self.map(|v| v.clamp(0.0, 255.0).round())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<GrayImage> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::invalid(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        Ok(GrayImage::from_fn(height, width, |y, x| {
            self.get(top + y, left + x)
        }))
    }

    pub fn ensure_even(&self) -> Result<()> {
        if !self.height.is_multiple_of(2) || !self.width.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "image is {}x{}; both dimensions must be even",
                self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn to_luma8(&self) -> image::GrayImage {
        let buf = self
            .pixels
            .iter()
            .map(|&v| v.clamp(0.0, 255.0).round() as u8)
            .collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions")
    }

    pub fn from_luma8(img: &image::GrayImage) -> GrayImage {
        GrayImage {
            height: img.height() as usize,
            width: img.width() as usize,
            pixels: img.as_raw().iter().map(|&v| v as f64).collect(),
        }
    }

    /// Decode any supported image file, converting colour input to luma.
    pub fn load(path: impl AsRef<Path>) -> Result<GrayImage> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = GrayImage::from_luma8(&img.to_luma8());
        if gray.height == 0 || gray.width == 0 {
            return Err(Error::invalid(format!("{}: empty image", path.display())));
        }
        Ok(gray)
    }

    /// Write an 8-bit image; the format follows the extension (`.png`,
    /// `.pgm`). The file is written to a temporary sibling and renamed into
    /// place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let format = image::ImageFormat::from_path(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let tmp = tmp_sibling(path);
        self.to_luma8()
            .save_with_format(&tmp, format)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn tmp_sibling(path: &Path) -> std::path::PathBuf {
    // keep the real extension last so format detection still works
    match path.extension() {
        Some(ext) => path.with_extension(format!("tmp.{}", ext.to_string_lossy())),
        None => path.with_extension("tmp"),
    }
}

/// Write `bytes` to `path` atomically (temporary sibling + rename).
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let tmp = tmp_sibling(path);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(6, 10, |y, x| ((y * 31 + x * 7) % 256) as f64);
        for name in ["a.png", "a.pgm"] {
            let p = dir.path().join(name);
            img.save(&p).unwrap();
            assert_eq!(GrayImage::load(&p).unwrap(), img);
        }
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }

    #[test]
    fn crop_bounds() {
        let img = GrayImage::filled(4, 4, 1.0);
        assert!(img.crop(2, 2, 3, 1).is_err());
        assert_eq!(img.crop(1, 1, 2, 3).unwrap().dims(), (2, 3));
    }

    #[test]
    fn odd_dims_named() {
        let err = GrayImage::filled(5, 4, 0.0).ensure_even().unwrap_err();
        assert!(err.to_string().contains("even"));
    }
}
