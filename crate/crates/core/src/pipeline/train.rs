use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::augment::augment;
use super::patches::{extract_pairs, PatchPair, Sampling};
use crate::corpus::Manifest;
use crate::error::{Error, Result};
use crate::image::{write_atomic, GrayImage};
use crate::jpeg::{degrade, QuantSpec};
use crate::metrics::PEAK;
use crate::net::{from_network_output, save_checkpoint, Branch, Model, NetworkConfig, QfTag};
use crate::tensor::{Real, Sgd, Tensor};

/// Quality factors a model is trained on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QfMode {
    Dedicated(u8),
    Blind(Vec<u8>),
}

impl QfMode {
    pub fn tag(&self) -> QfTag {
        match self {
            QfMode::Dedicated(q) => QfTag::Dedicated(*q),
            QfMode::Blind(_) => QfTag::Blind,
        }
    }

    pub fn qfs(&self) -> &[u8] {
        match self {
            QfMode::Dedicated(q) => std::slice::from_ref(q),
            QfMode::Blind(qs) => qs,
        }
    }
}

fn parse_qf(s: &str) -> Result<u8> {
    let q: u8 = s
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("quality factor {s:?} must be in 1..=100")))?;
    QuantSpec::new(q)?;
    Ok(q)
}

/// Comma-separated quality factors, each validated.
pub fn parse_qf_list(s: &str) -> Result<Vec<u8>> {
    s.split(',').map(parse_qf).collect()
}

impl std::str::FromStr for QfMode {
    type Err = Error;

    /// `"10"` or `"blind:10,20,30,40"`.
    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("blind:") {
            Some(list) => {
                let qs = parse_qf_list(list)?;
                Ok(QfMode::Blind(qs))
            }
            None => Ok(QfMode::Dedicated(parse_qf(s)?)),
        }
    }
}

impl std::fmt::Display for QfMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QfMode::Dedicated(q) => write!(f, "{q}"),
            QfMode::Blind(qs) => {
                let list: Vec<String> = qs.iter().map(|q| q.to_string()).collect();
                write!(f, "blind:{}", list.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub network: NetworkConfig,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_decay_factor: f64,
    /// The learning rate drops every this many epochs.
    pub lr_decay_epochs: u64,
    pub max_iterations: u64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Side of a packed patch.
    pub patch_size: usize,
    /// Training patch pairs drawn per branch.
    pub patches: usize,
    /// Upper bound on validation patches.
    pub val_patches: usize,
    /// Iterations between log lines and validation passes.
    pub log_interval: u64,
    pub qf_mode: QfMode,
    pub seed: u64,
}

impl TrainConfig {
    pub fn desk(qf_mode: QfMode) -> Self {
        TrainConfig {
            network: NetworkConfig::DESK,
            batch_size: 16,
            initial_lr: 2e-5,
            lr_decay_factor: 10.0,
            lr_decay_epochs: 10,
            max_iterations: 2000,
            momentum: 0.9,
            weight_decay: 1e-4,
            patch_size: 31,
            patches: 2048,
            val_patches: 256,
            log_interval: 100,
            qf_mode,
            seed: 0,
        }
    }

    pub fn paper(qf_mode: QfMode) -> Self {
        TrainConfig {
            network: NetworkConfig::PAPER,
            batch_size: 64,
            initial_lr: 5e-6,
            max_iterations: 300_000,
            patches: 523_968,
            log_interval: 1000,
            ..TrainConfig::desk(qf_mode)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.batch_size == 0 || self.patches == 0 || self.log_interval == 0 {
            return Err(Error::invalid(
                "batch size, patch count and log interval must be positive",
            ));
        }
        if self.patch_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "patch size must be odd, got {}",
                self.patch_size
            )));
        }
        let positive = |x: f64| x > 0.0;
        if !positive(self.initial_lr)
            || !positive(self.lr_decay_factor)
            || self.lr_decay_epochs == 0
        {
            return Err(Error::invalid("learning-rate schedule must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::invalid(
                "momentum must be in [0, 1) and weight decay >= 0",
            ));
        }
        if self.qf_mode.qfs().is_empty() {
            return Err(Error::invalid(
                "blind mode needs at least one quality factor",
            ));
        }
        Ok(())
    }

    pub fn iterations_per_epoch(&self, pairs: usize) -> u64 {
        pairs.div_ceil(self.batch_size) as u64
    }

    pub fn decay_interval(&self, pairs: usize) -> u64 {
        (self.iterations_per_epoch(pairs) * self.lr_decay_epochs).max(1)
    }

    pub fn learning_rate(&self, iteration: u64, pairs: usize) -> f64 {
        let drops = iteration / self.decay_interval(pairs);
        self.initial_lr / self.lr_decay_factor.powi(drops.min(i32::MAX as u64) as i32)
    }

    /// `key = value` lines, one per field.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let n = &self.network;
        let _ = writeln!(s, "depth = {}", n.depth);
        let _ = writeln!(s, "hidden_channels = {}", n.hidden_channels);
        let _ = writeln!(s, "io_channels = {}", n.io_channels);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "initial_lr = {}", self.initial_lr);
        let _ = writeln!(s, "lr_decay_factor = {}", self.lr_decay_factor);
        let _ = writeln!(s, "lr_decay_epochs = {}", self.lr_decay_epochs);
        let _ = writeln!(s, "max_iterations = {}", self.max_iterations);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "patch_size = {}", self.patch_size);
        let _ = writeln!(s, "patches = {}", self.patches);
        let _ = writeln!(s, "val_patches = {}", self.val_patches);
        let _ = writeln!(s, "log_interval = {}", self.log_interval);
        let _ = writeln!(s, "qf = {}", self.qf_mode);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

/// A clean image and its degraded counterpart.
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub name: String,
    pub clean: GrayImage,
    pub degraded: GrayImage,
    pub qf: u8,
}

/// Degraded/clean image pairs for training and validation.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Vec<ImagePair>,
    pub val: Vec<ImagePair>,
}

fn even_crop(image: &GrayImage) -> Result<GrayImage> {
    let (h, w) = image.dims();
    image.crop(0, 0, h & !1, w & !1)
}

fn degrade_at(image: &GrayImage, qf: u8) -> Result<GrayImage> {
    Ok(degrade(image, &QuantSpec::new(qf)?))
}

impl TrainData {
    /// Augment the training images and degrade every variant; quality
    /// factors of a blind list are assigned round-robin over variants.
    /// Validation images are cropped to even size and degraded at every
    /// quality factor of the mode.
    pub fn prepare(
        train: &[(String, GrayImage)],
        val: &[(String, GrayImage)],
        qf_mode: &QfMode,
    ) -> Result<Self> {
        let qfs = qf_mode.qfs();
        if qfs.is_empty() {
            return Err(Error::invalid("no quality factors given"));
        }
        let variants: Vec<(String, GrayImage)> = train
            .iter()
            .flat_map(|(name, img)| {
                augment(img)
                    .into_iter()
                    .enumerate()
                    .map(move |(k, v)| (format!("{name}#{k}"), v))
            })
            .collect();
        let train = variants
            .into_par_iter()
            .enumerate()
            .map(|(i, (name, clean))| {
                let qf = qfs[i % qfs.len()];
                Ok(ImagePair {
                    degraded: degrade_at(&clean, qf)?,
                    name,
                    clean,
                    qf,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let val = val
            .iter()
            .flat_map(|(name, img)| qfs.iter().map(move |&qf| (name, img, qf)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(name, img, qf)| {
                let clean = even_crop(img)?;
                Ok(ImagePair {
                    name: name.clone(),
                    degraded: degrade_at(&clean, qf)?,
                    clean,
                    qf,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if train.is_empty() {
            return Err(Error::invalid("training set is empty after augmentation"));
        }
        Ok(TrainData { train, val })
    }

    /// Training pairs from a manifest: each clean image is augmented and
    /// re-degraded at its recorded quality factor. Validation pairs are
    /// used as stored.
    pub fn from_manifests(train: &Manifest, val: Option<&Manifest>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("training manifest is empty"));
        }
        let mut pairs = Vec::new();
        for e in &train.entries {
            let clean = GrayImage::load(&e.clean)?;
            let name = e.clean.display().to_string();
            for (k, v) in augment(&clean).into_iter().enumerate() {
                pairs.push((format!("{name}#{k}"), v, e.qf));
            }
        }
        let train = pairs
            .into_par_iter()
            .map(|(name, clean, qf)| {
                Ok(ImagePair {
                    degraded: degrade_at(&clean, qf)?,
                    name,
                    clean,
                    qf,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let val = match val {
            None => Vec::new(),
            Some(m) => m
                .entries
                .iter()
                .map(|e| {
                    Ok(ImagePair {
                        name: e.clean.display().to_string(),
                        clean: even_crop(&GrayImage::load(&e.clean)?)?,
                        degraded: even_crop(&GrayImage::load(&e.degraded)?)?,
                        qf: e.qf,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        if train.is_empty() {
            return Err(Error::invalid("training set is empty after augmentation"));
        }
        Ok(TrainData { train, val })
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `patches` random windows spread evenly over the training pairs. Pairs
/// too small for a patch contribute nothing.
pub fn training_patches(
    data: &TrainData,
    branch: Branch,
    cfg: &TrainConfig,
) -> Result<Vec<PatchPair>> {
    let usable: Vec<&ImagePair> = data
        .train
        .iter()
        .filter(|p| p.clean.height() / 2 >= cfg.patch_size && p.clean.width() / 2 >= cfg.patch_size)
        .collect();
    if usable.is_empty() {
        return Err(Error::invalid(format!(
            "no training image is large enough for {0}x{0} packed patches",
            cfg.patch_size
        )));
    }
    let n = usable.len();
    let per: Vec<Vec<PatchPair>> = usable
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let count = cfg.patches / n + usize::from(i < cfg.patches % n);
            if count == 0 {
                return Ok(Vec::new());
            }
            extract_pairs(
                &p.clean,
                &p.degraded,
                branch,
                p.qf,
                cfg.patch_size,
                count,
                Sampling::Random,
                mix(cfg.seed, i as u64),
            )
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Grid windows from the validation pairs, at most `cfg.val_patches`.
pub fn validation_patches(
    data: &TrainData,
    branch: Branch,
    cfg: &TrainConfig,
) -> Result<Vec<PatchPair>> {
    let usable: Vec<&ImagePair> = data
        .val
        .iter()
        .filter(|p| p.clean.height() / 2 >= cfg.patch_size && p.clean.width() / 2 >= cfg.patch_size)
        .collect();
    if usable.is_empty() {
        return Ok(Vec::new());
    }
    let n = usable.len();
    let per: Vec<Vec<PatchPair>> = usable
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let count = cfg.val_patches / n + usize::from(i < cfg.val_patches % n);
            extract_pairs(
                &p.clean,
                &p.degraded,
                branch,
                p.qf,
                cfg.patch_size,
                count,
                Sampling::Grid {
                    stride: cfg.patch_size,
                },
                0,
            )
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

fn to_net<T: Real>(t: &Tensor<f64>) -> Tensor<T> {
    t.cast()
}

/// Mean per-patch PSNR of degraded inputs and of model estimates, measured
/// on the unpacked image windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValScore {
    pub input_psnr: f64,
    pub output_psnr: f64,
}

fn patch_psnr(reference: &GrayImage, test: &GrayImage) -> f64 {
    let mse = reference
        .pixels()
        .iter()
        .zip(test.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.pixels().len() as f64;
    crate::metrics::PSNR_CAP.min(10.0 * (PEAK * PEAK / mse).log10())
}

const VAL_CHUNK: usize = 32;

pub fn validate<T: Real>(model: &Model<T>, patches: &[PatchPair]) -> Result<ValScore> {
    if patches.is_empty() {
        return Ok(ValScore {
            input_psnr: f64::NAN,
            output_psnr: f64::NAN,
        });
    }
    let branch = model.branch;
    let (mut sum_in, mut sum_out) = (0.0, 0.0);
    for chunk in patches.chunks(VAL_CHUNK) {
        let ys: Vec<Tensor<T>> = chunk.iter().map(|p| to_net(&p.y)).collect();
        let input = Tensor::stack(&ys)?;
        let estimate = input.add(&model.infer(&input)?)?;
        for (k, p) in chunk.iter().enumerate() {
            let clean = from_network_output(&to_net::<T>(&p.x), branch)?;
            let degraded = from_network_output(&ys[k], branch)?;
            let est = from_network_output(&estimate.slice_batch(k, 1)?, branch)?;
            sum_in += patch_psnr(&clean, &degraded);
            sum_out += patch_psnr(&clean, &est);
        }
    }
    let n = patches.len() as f64;
    Ok(ValScore {
        input_psnr: sum_in / n,
        output_psnr: sum_out / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub iteration: u64,
    /// Mean loss over the iterations since the previous record.
    pub loss: f64,
    pub lr: f64,
    pub val_psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub branch: Branch,
    pub qf: QfTag,
    /// Validation PSNR of the degraded inputs.
    pub input_psnr: f64,
    /// Validation PSNR of the initial model.
    pub initial_psnr: f64,
    pub records: Vec<LogRecord>,
    /// Loss of every iteration.
    pub losses: Vec<f64>,
    /// Iteration and validation PSNR of the best checkpoint.
    pub best: Option<(u64, f64)>,
}

impl TrainingLog {
    pub fn to_tsv(&self) -> String {
        let mut s = format!(
            "# branch {} {} input_psnr {:.6} initial_psnr {:.6}\niter\tloss\tlr\tval_psnr\n",
            self.branch.name(),
            self.qf,
            self.input_psnr,
            self.initial_psnr
        );
        for r in &self.records {
            let _ = writeln!(
                s,
                "{}\t{:.8e}\t{:.3e}\t{:.6}",
                r.iteration, r.loss, r.lr, r.val_psnr
            );
        }
        s
    }

    /// Trailing-window means of the per-iteration loss.
    pub fn smoothed_losses(&self, window: usize) -> Vec<f64> {
        if window == 0 || self.losses.len() < window {
            return Vec::new();
        }
        self.losses
            .windows(window)
            .map(|w| w.iter().sum::<f64>() / window as f64)
            .collect()
    }

    pub fn final_psnr(&self) -> Option<f64> {
        self.records.last().map(|r| r.val_psnr)
    }
}

/// Where [`train_branch`] writes its artifacts.
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub checkpoint: PathBuf,
    pub best: PathBuf,
    pub log: PathBuf,
}

impl OutputPaths {
    /// `<stem>.ckpt`, `<stem>.best.ckpt` and `<stem>.log.tsv` in `dir`.
    pub fn new(dir: &Path, stem: &str) -> Self {
        OutputPaths {
            checkpoint: dir.join(format!("{stem}.ckpt")),
            best: dir.join(format!("{stem}.best.ckpt")),
            log: dir.join(format!("{stem}.log.tsv")),
        }
    }
}

pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub log: TrainingLog,
}

/// Seed for the initial weights of a branch.
pub fn init_seed(seed: u64, branch: Branch) -> u64 {
    mix(seed, 0x1000 + u64::from(branch.code()))
}

/// Train one branch with minibatch SGD and a step learning-rate schedule.
///
/// With `out` set, the final and best checkpoints and the log are written
/// there. A non-finite loss or gradient stops training with an error after
/// writing the model as it was before the failing iteration to the final
/// checkpoint path.
pub fn train_branch<T: Real>(
    data: &TrainData,
    branch: Branch,
    cfg: &TrainConfig,
    out: Option<&OutputPaths>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let train = training_patches(data, branch, cfg)?;
    let val = validation_patches(data, branch, cfg)?;
    let ys: Vec<Tensor<T>> = train.iter().map(|p| to_net(&p.y)).collect();
    let xs: Vec<Tensor<T>> = train.iter().map(|p| to_net(&p.x)).collect();
    drop(train);
    let n = ys.len();

    let mut model = Model::<T>::init(
        cfg.network,
        branch,
        cfg.qf_mode.tag(),
        init_seed(cfg.seed, branch),
    )?;
    let mut opt = Sgd::<T>::new(cfg.initial_lr, cfg.momentum, cfg.weight_decay);
    let start = validate(&model, &val)?;
    let mut log = TrainingLog {
        branch,
        qf: cfg.qf_mode.tag(),
        input_psnr: start.input_psnr,
        initial_psnr: start.output_psnr,
        records: Vec::new(),
        losses: Vec::with_capacity(cfg.max_iterations as usize),
        best: None,
    };
    let write_log = |log: &TrainingLog| -> Result<()> {
        match out {
            Some(o) => write_atomic(&o.log, log.to_tsv().as_bytes()),
            None => Ok(()),
        }
    };

    let per_epoch = cfg.iterations_per_epoch(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut since_log = 0.0;
    for it in 0..cfg.max_iterations {
        let pos = (it % per_epoch) as usize;
        if pos == 0 {
            order.sort_unstable();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(
                cfg.seed,
                0x2000 + it / per_epoch,
            )));
        }
        let idx = &order[pos * cfg.batch_size..((pos + 1) * cfg.batch_size).min(n)];
        let degraded = Tensor::stack(idx.iter().map(|&i| &ys[i]))?;
        let clean = Tensor::stack(idx.iter().map(|&i| &xs[i]))?;
        opt.learning_rate = cfg.learning_rate(it, n);

        let last_good = model.clone();
        let step = model
            .loss_and_grads(&degraded, &clean)
            .and_then(|(loss, grads)| {
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { iteration: it });
                }
                opt.step(&mut model, &grads)?;
                Ok(loss)
            });
        let loss = match step {
            Ok(l) => l,
            Err(e) => {
                if let Some(o) = out {
                    save_checkpoint(&last_good, &o.checkpoint)?;
                    write_log(&log)?;
                }
                return Err(match e {
                    Error::NonFinite { .. } => Error::NonFiniteLoss { iteration: it },
                    e => e,
                });
            }
        };
        model.iteration += 1;
        log.losses.push(loss);
        since_log += loss;

        let done = it + 1;
        if done % cfg.log_interval == 0 || done == cfg.max_iterations {
            let span = done - log.records.last().map_or(0, |r| r.iteration);
            let score = validate(&model, &val)?;
            log.records.push(LogRecord {
                iteration: done,
                loss: since_log / span as f64,
                lr: opt.learning_rate,
                val_psnr: score.output_psnr,
            });
            since_log = 0.0;
            log::info!(
                "{} {}: iter {done} loss {:.4e} val {:.3} dB",
                branch.name(),
                cfg.qf_mode,
                loss,
                score.output_psnr
            );
            if log.best.is_none_or(|(_, b)| score.output_psnr > b) {
                log.best = Some((done, score.output_psnr));
                if let Some(o) = out {
                    save_checkpoint(&model, &o.best)?;
                }
            }
            write_log(&log)?;
        }
    }
    if let Some(o) = out {
        save_checkpoint(&model, &o.checkpoint)?;
        if log.best.is_none() {
            save_checkpoint(&model, &o.best)?;
        }
        write_log(&log)?;
    }
    Ok(TrainOutcome { model, log })
}
