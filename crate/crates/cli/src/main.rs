use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use softdecode_core::corpus::{list_images, make_pair_corpus, Manifest, MANIFEST_NAME};
use softdecode_core::image::write_atomic;
use softdecode_core::net::{load_checkpoint, peek_header, soft_decode, Model};
use softdecode_core::pipeline::{
    bench_decode, bench_tsv, evaluate_corpus, evaluate_pairs, load_eval_images, load_eval_pairs,
    parse_qf_list, train_branch, OutputPaths, QfMode, TrainConfig, TrainData,
};
use softdecode_core::{Branch, Dtype, GrayImage, QfTag, Real};

const CONFIG_ECHO: &str = "run-config.txt";

#[derive(Parser, Debug)]
#[command(
    name = "softdecode",
    version,
    about = "Soft decoding of JPEG-compressed grayscale images",
    after_help = "Set RAYON_NUM_THREADS to limit worker threads."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degrade a directory of clean images and write a pair manifest.
    Degrade(DegradeArgs),
    /// Train one or both branch networks.
    Train(TrainArgs),
    /// Soft-decode degraded images.
    Decode(DecodeArgs),
    /// Score JPEG and decoded outputs on a clean corpus.
    Eval(EvalArgs),
    /// Time single-branch and fused decoding per image size.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct DegradeArgs {
    /// Directory of clean images.
    #[arg(long = "in")]
    input: PathBuf,
    /// Quality factor, or a comma-separated list assigned round-robin.
    #[arg(long)]
    qf: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Domain {
    Pixel,
    Wavelet,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Clean training images, or a directory holding a pair manifest.
    #[arg(long)]
    train: PathBuf,
    /// Held-out clean images (or a manifest directory) for validation.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    domain: Domain,
    /// `10` for a dedicated model, `blind:10,20,30,40` for a universal one.
    #[arg(long, default_value = "10")]
    qf: String,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long, default_value = "f32")]
    precision: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patches: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Pixel-branch checkpoint.
    #[arg(long)]
    pixel: Option<PathBuf>,
    /// Wavelet-branch checkpoint.
    #[arg(long)]
    wavelet: Option<PathBuf>,
    /// Compute precision; defaults to the pixel checkpoint's.
    #[arg(long)]
    precision: Option<String>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[command(flatten)]
    models: ModelArgs,
    /// A degraded image or a directory of them.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the clamped output of each branch.
    #[arg(long)]
    emit_branches: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    models: ModelArgs,
    /// Directory of clean reference images, degraded at each `--qf`.
    #[arg(long, required_unless_present = "pairs", conflicts_with = "pairs")]
    corpus: Option<PathBuf>,
    /// Directory holding a pair manifest; its stored degraded images are
    /// scored instead of fresh degradations.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long, default_value = "10")]
    qf: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    models: ModelArgs,
    /// Square image sizes, comma separated.
    #[arg(long, default_value = "128,256,512")]
    sizes: String,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Network shape for freshly initialized models when no checkpoints are given.
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    out: PathBuf,
}

fn prepare_out(dir: &Path, echo: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_atomic(dir.join(CONFIG_ECHO), echo.as_bytes())?;
    Ok(())
}

fn echo_header(command: &str, args: &impl std::fmt::Debug) -> String {
    format!("command = {command}\nargs = {args:#?}\n")
}

fn cmd_degrade(a: &DegradeArgs) -> Result<()> {
    let qfs = parse_qf_list(&a.qf)?;
    prepare_out(&a.out, &echo_header("degrade", a))?;
    let m = make_pair_corpus(&a.input, &qfs, &a.out)?;
    log::info!("wrote {} pairs to {}", m.len(), a.out.display());
    Ok(())
}

fn named_images(dir: &Path) -> Result<Vec<(String, GrayImage)>> {
    let files = list_images(dir)?;
    if files.is_empty() {
        bail!("no images found in {}", dir.display());
    }
    files
        .iter()
        .map(|p| Ok((p.display().to_string(), GrayImage::load(p)?)))
        .collect()
}

fn load_train_data(a: &TrainArgs, mode: &QfMode) -> Result<TrainData> {
    let manifest = a.train.join(MANIFEST_NAME);
    if manifest.is_file() {
        let train = Manifest::load(&manifest)?;
        let val = match &a.val {
            Some(v) if v.join(MANIFEST_NAME).is_file() => {
                Some(Manifest::load(v.join(MANIFEST_NAME))?)
            }
            Some(v) => bail!(
                "training data is a manifest, so {} must contain {MANIFEST_NAME} too",
                v.display()
            ),
            None => None,
        };
        return Ok(TrainData::from_manifests(&train, val.as_ref())?);
    }
    let train = named_images(&a.train)?;
    let val = match &a.val {
        Some(v) => named_images(v)?,
        None => Vec::new(),
    };
    Ok(TrainData::prepare(&train, &val, mode)?)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mode: QfMode = a.qf.parse()?;
    let mut cfg = match a.preset {
        Preset::Desk => TrainConfig::desk(mode.clone()),
        Preset::Paper => TrainConfig::paper(mode.clone()),
    };
    cfg.seed = a.seed;
    if let Some(v) = a.iterations {
        cfg.max_iterations = v;
    }
    if let Some(v) = a.depth {
        cfg.network.depth = v;
    }
    if let Some(v) = a.channels {
        cfg.network.hidden_channels = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.initial_lr = v;
    }
    if let Some(v) = a.patches {
        cfg.patches = v;
    }
    cfg.validate()?;
    let dtype: Dtype = a.precision.parse()?;
    let mut echo = echo_header("train", a);
    let _ = writeln!(echo, "precision = {}", dtype.name());
    echo.push_str(&cfg.describe());
    prepare_out(&a.out, &echo)?;

    let data = load_train_data(a, &mode)?;
    let branches: &[Branch] = match a.domain {
        Domain::Pixel => &[Branch::Pixel],
        Domain::Wavelet => &[Branch::Wavelet],
        Domain::Both => &[Branch::Pixel, Branch::Wavelet],
    };
    for &branch in branches {
        let paths = OutputPaths::new(&a.out, branch.name());
        let log = match dtype {
            Dtype::F32 => train_branch::<f32>(&data, branch, &cfg, Some(&paths))?.log,
            Dtype::F64 => train_branch::<f64>(&data, branch, &cfg, Some(&paths))?.log,
        };
        println!(
            "{}\tinput_psnr {:.3}\tfinal_psnr {:.3}\t{}",
            branch.name(),
            log.input_psnr,
            log.final_psnr().unwrap_or(f64::NAN),
            paths.checkpoint.display()
        );
    }
    Ok(())
}

fn precision_of(m: &ModelArgs) -> Result<Dtype> {
    if let Some(p) = &m.precision {
        return Ok(p.parse()?);
    }
    match &m.pixel {
        Some(p) => Ok(peek_header(p)?.dtype),
        None => Ok(Dtype::F32),
    }
}

fn load_pair<T: Real>(m: &ModelArgs) -> Result<Option<(Model<T>, Model<T>)>> {
    match (&m.pixel, &m.wavelet) {
        (None, None) => Ok(None),
        (Some(p), Some(w)) => {
            let p = load_checkpoint::<T>(p)?;
            let w = load_checkpoint::<T>(w)?;
            if p.branch != Branch::Pixel || w.branch != Branch::Wavelet {
                bail!(
                    "--pixel must be a pixel checkpoint and --wavelet a wavelet one (got {} and {})",
                    p.branch.name(),
                    w.branch.name()
                );
            }
            Ok(Some((p, w)))
        }
        _ => bail!("--pixel and --wavelet must be given together"),
    }
}

fn require_pair<T: Real>(m: &ModelArgs) -> Result<(Model<T>, Model<T>)> {
    load_pair(m)?.context("--pixel and --wavelet checkpoints are required")
}

fn decode_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let files = list_images(input)?;
        if files.is_empty() {
            bail!("no images found in {}", input.display());
        }
        Ok(files)
    } else if input.is_file() {
        Ok(vec![input.to_path_buf()])
    } else {
        bail!("{} does not exist", input.display())
    }
}

fn run_decode<T: Real>(a: &DecodeArgs) -> Result<()> {
    let (pixel, wavelet) = require_pair::<T>(&a.models)?;
    let inputs = decode_inputs(&a.input)?;
    prepare_out(&a.out, &echo_header("decode", a))?;
    for path in inputs {
        let y = GrayImage::load(&path)?;
        let d = soft_decode(&pixel, &wavelet, &y)
            .with_context(|| format!("decoding {}", path.display()))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        d.fused.save(a.out.join(format!("{stem}.png")))?;
        if a.emit_branches {
            d.pixel.save(a.out.join(format!("{stem}.pixel.png")))?;
            d.wavelet.save(a.out.join(format!("{stem}.wavelet.png")))?;
        }
    }
    Ok(())
}

fn run_eval<T: Real>(a: &EvalArgs) -> Result<()> {
    let qfs = parse_qf_list(&a.qf)?;
    let models = load_pair::<T>(&a.models)?;
    if let Some((p, _)) = &models {
        if let QfTag::Dedicated(q) = p.qf {
            if qfs.iter().any(|&v| v != q) {
                log::warn!("dedicated qf{q} model evaluated at other quality factors");
            }
        }
    }
    let models = models.as_ref().map(|(p, w)| (p, w));
    let report = match (&a.corpus, &a.pairs) {
        (Some(corpus), _) => {
            let images = load_eval_images(corpus)?;
            prepare_out(&a.out, &echo_header("eval", a))?;
            evaluate_corpus(models, &images, &qfs)?
        }
        (None, Some(dir)) => {
            let pairs = load_eval_pairs(&Manifest::load(dir.join(MANIFEST_NAME))?)?;
            if pairs.is_empty() {
                bail!("{} lists no pairs", dir.join(MANIFEST_NAME).display());
            }
            prepare_out(&a.out, &echo_header("eval", a))?;
            evaluate_pairs(models, &pairs)?
        }
        (None, None) => bail!("one of --corpus or --pairs is required"),
    };
    let table = report.table_tsv();
    write_atomic(a.out.join("table.tsv"), table.as_bytes())?;
    write_atomic(
        a.out.join("per_image.tsv"),
        report.per_image_tsv().as_bytes(),
    )?;
    print!("{table}");
    Ok(())
}

fn run_bench<T: Real>(a: &BenchArgs) -> Result<()> {
    let sizes = a
        .sizes
        .split(',')
        .map(|s| {
            let n: usize = s
                .trim()
                .parse()
                .with_context(|| format!("bad size {s:?}"))?;
            if n < 2 || n % 2 == 1 {
                bail!("sizes must be even and at least 2, got {n}");
            }
            Ok((n, n))
        })
        .collect::<Result<Vec<_>>>()?;
    let (pixel, wavelet) = match load_pair::<T>(&a.models)? {
        Some(pair) => pair,
        None => {
            let network = match a.preset {
                Preset::Desk => softdecode_core::NetworkConfig::DESK,
                Preset::Paper => softdecode_core::NetworkConfig::PAPER,
            };
            let qf = QfTag::Dedicated(10);
            (
                Model::init(network, Branch::Pixel, qf, 1)?,
                Model::init(network, Branch::Wavelet, qf, 2)?,
            )
        }
    };
    prepare_out(&a.out, &echo_header("bench", a))?;
    let rows = bench_decode(&pixel, &wavelet, &sizes, a.repeats)?;
    let tsv = bench_tsv(&rows);
    write_atomic(a.out.join("bench.tsv"), tsv.as_bytes())?;
    print!("{tsv}");
    Ok(())
}

macro_rules! dispatch {
    ($dtype:expr, $f:ident, $a:expr) => {
        match $dtype {
            Dtype::F32 => $f::<f32>($a),
            Dtype::F64 => $f::<f64>($a),
        }
    };
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Degrade(a) => cmd_degrade(a),
        Command::Train(a) => cmd_train(a),
        Command::Decode(a) => dispatch!(precision_of(&a.models)?, run_decode, a),
        Command::Eval(a) => dispatch!(precision_of(&a.models)?, run_eval, a),
        Command::Bench(a) => dispatch!(precision_of(&a.models)?, run_bench, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
