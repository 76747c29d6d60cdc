//! Clean/degraded pair corpora and their manifest files.
//!
//! A manifest is a line-oriented text file, one pair per line:
//! `<clean-path>\t<degraded-path>\t<qf>`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{write_atomic, GrayImage};
use crate::jpeg::{degrade, QuantSpec};

pub const MANIFEST_NAME: &str = "manifest.tsv";

const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm", "pnm", "bmp", "jpg", "jpeg", "tif", "tiff"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub clean: PathBuf,
    pub degraded: PathBuf,
    pub qf: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{}\t{}\t{}",
                e.clean.display(),
                e.degraded.display(),
                e.qf
            );
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Manifest> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| Error::Manifest {
                path: origin.to_path_buf(),
                line: i + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected 3 tab-separated fields"));
            }
            let qf: u8 = fields[2]
                .trim()
                .parse()
                .map_err(|_| bad("quality factor is not an integer"))?;
            if !(1..=100).contains(&qf) {
                return Err(bad("quality factor outside 1..=100"));
            }
            entries.push(ManifestEntry {
                clean: PathBuf::from(fields[0]),
                degraded: PathBuf::from(fields[1]),
                qf,
            });
        }
        Ok(Manifest { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::parse(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Degrade every image in `clean_dir` and record the pairs.
///
/// With several quality factors they are assigned round-robin in file order.
/// Unreadable files are skipped with a warning. The manifest is written to
/// `out_dir/manifest.tsv` once all images are done.
pub fn make_pair_corpus(
    clean_dir: impl AsRef<Path>,
    qfs: &[u8],
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    if qfs.is_empty() {
        return Err(Error::invalid("at least one quality factor is required"));
    }
    let specs = qfs
        .iter()
        .map(|&q| QuantSpec::new(q))
        .collect::<Result<Vec<_>>>()?;
    let files = list_images(&clean_dir)?;
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no images found in {}",
            clean_dir.as_ref().display()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let results: Vec<Option<ManifestEntry>> = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let spec = &specs[i % specs.len()];
            let clean = match GrayImage::load(path) {
                Ok(img) => img,
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    return Ok(None);
                }
            };
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("image{i}"));
            let degraded_path = out_dir.join(format!("{stem}_qf{}.png", spec.qf()));
            degrade(&clean, spec).save(&degraded_path)?;
            Ok(Some(ManifestEntry {
                clean: path.clone(),
                degraded: degraded_path,
                qf: spec.qf(),
            }))
        })
        .collect::<Result<_>>()?;

    let manifest = Manifest {
        entries: results.into_iter().flatten().collect(),
    };
    if manifest.is_empty() {
        return Err(Error::invalid("no readable images in the corpus"));
    }
    manifest.save(out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_rejects_bad_lines() {
        let p = Path::new("m.tsv");
        assert!(Manifest::parse("a\tb\n", p).is_err());
        assert!(Manifest::parse("a\tb\t0\n", p).is_err());
        assert!(Manifest::parse("a\tb\tx\n", p).is_err());
        let m = Manifest::parse("# comment\n\na.png\tb.png\t10\n", p).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(Manifest::parse(&m.to_text(), p).unwrap(), m);
    }
}
