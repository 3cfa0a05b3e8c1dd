//! `segsf` command-line front end.
//!
//! Exit status: 0 on success, 2 when registration finds no consensus, 1 on
//! any input or usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use segsf::eval::{
    checkerboard, rotate_about_center, run_sweep, synth_pair, EvalReport, SynthSpec, DEFAULT_ANGLES,
};
use segsf::geometry::warp_image;
use segsf::rf_geom::{chain_stages, format_stack, resolve_stack};
use segsf::tensor_io::{read_image, read_tensor, write_image, write_tensor};
use segsf::{
    ClassId, KeypointMode, LabelMask, ModelKind, PipelineConfig, RansacParams, RasterImage, Tensor,
    TransformDocument,
};

#[derive(Parser)]
#[command(
    name = "segsf",
    version,
    about = "Segmentation-feature image registration"
)]
struct Cli {
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a query feature map onto a reference feature map.
    Register(RegisterArgs),
    /// Rotation sweep over synthetic pairs.
    Sweep(SweepArgs),
    /// Write a synthetic rotated pair as STF tensors and PGM images.
    Synth(SynthArgs),
    /// Warp a query image with a saved transform and interleave it with the reference.
    Checkerboard(CheckerboardArgs),
    /// Print the receptive-field state after each layer of a stack.
    Rfcalc(RfcalcArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// Layer stack ("k7s2p3,k3s2p1,...") or preset name.
    #[arg(long, default_value = "resnet34-decoder3")]
    layers: String,
    #[arg(long, default_value = "jump")]
    keypoint_mode: KeypointMode,
    /// Comma-separated class ids that take part in matching (default: all).
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<ClassId>>,
    #[arg(long, default_value_t = segsf::descriptor::DEFAULT_PCA_DIM)]
    pca_dim: usize,
    #[arg(long, default_value_t = segsf::matching::DEFAULT_RATIO)]
    ratio: f64,
    /// Keep only mutual nearest neighbours.
    #[arg(long)]
    cross_check: bool,
    #[arg(long, default_value = "affine")]
    model: ModelKind,
    #[arg(long, default_value_t = RansacParams::default().threshold)]
    ransac_threshold: f64,
    #[arg(long, default_value_t = RansacParams::default().confidence)]
    ransac_confidence: f64,
    #[arg(long, default_value_t = RansacParams::default().max_iterations)]
    ransac_max_iters: usize,
    /// RANSAC seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    grid_stride: usize,
    /// Road-probability threshold for f32 masks.
    #[arg(long, default_value_t = segsf::config::DEFAULT_MASK_THRESHOLD)]
    mask_threshold: f32,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let layers = resolve_stack(&self.layers).context("--layers")?;
        let config = PipelineConfig {
            layers,
            keypoint_mode: self.keypoint_mode,
            classes: self.classes.clone(),
            pca_dim: self.pca_dim,
            ratio: self.ratio,
            cross_check: self.cross_check,
            model: self.model,
            ransac: RansacParams {
                threshold: self.ransac_threshold,
                confidence: self.ransac_confidence,
                max_iterations: self.ransac_max_iters,
                seed: self.seed,
            },
            grid_stride: self.grid_stride,
            mask_threshold: self.mask_threshold,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    query_features: PathBuf,
    #[arg(long)]
    query_mask: PathBuf,
    #[arg(long)]
    ref_features: PathBuf,
    #[arg(long)]
    ref_mask: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Transform document path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkerboard mosaic output; needs --query-image and --ref-image.
    #[arg(long, requires_all = ["query_image", "ref_image"])]
    checkerboard: Option<PathBuf>,
    #[arg(long)]
    query_image: Option<PathBuf>,
    #[arg(long)]
    ref_image: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    tile: usize,
    /// Write the accepted matches as "class qx qy rx ry dist" lines.
    #[arg(long)]
    matches_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Rotation angles in degrees.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    angles: Option<Vec<f64>>,
    /// Number of synthetic pairs per angle.
    #[arg(long, default_value_t = 10)]
    pairs: u64,
    /// World seed of the first pair; pair i uses first + i.
    #[arg(long, default_value_t = 0)]
    first_pair_seed: u64,
    #[command(flatten)]
    synth: SynthShape,
    /// Report document to compare against with Welch's t-test.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Report document path (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthShape {
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    channels: usize,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
}

impl SynthShape {
    fn spec(&self, seed: u64, stride: u64) -> Result<SynthSpec> {
        let spec = SynthSpec {
            width: self.width,
            height: self.height,
            stride: usize::try_from(stride)?,
            channels: self.channels,
            noise: self.noise,
            seed,
            ..SynthSpec::default()
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Rotation of the query about the image center, degrees.
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    angle: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    stride: u64,
    #[command(flatten)]
    shape: SynthShape,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckerboardArgs {
    #[arg(long)]
    query_image: PathBuf,
    #[arg(long)]
    ref_image: PathBuf,
    /// Transform document written by `register`.
    #[arg(long)]
    transform: PathBuf,
    #[arg(long, default_value_t = 32)]
    tile: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RfcalcArgs {
    #[arg(long, default_value = "resnet34-decoder3")]
    layers: String,
}

/// Registration ran to completion but found no supported model.
#[derive(Debug)]
struct NoConsensus(segsf::Error);

impl std::fmt::Display for NoConsensus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "no consensus: {}", self.0)
    }
}

impl std::error::Error for NoConsensus {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let result = match cli.command {
        Command::Register(a) => cmd_register(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Checkerboard(a) => cmd_checkerboard(a),
        Command::Rfcalc(a) => cmd_rfcalc(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<NoConsensus>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_tensor(path: &Path) -> Result<Tensor> {
    Ok(read_tensor(path)?)
}

/// Masks come as STF tensors (u8 class ids or f32 probabilities) or as
/// PGM rasters, where gray level / 255 is the road probability.
fn load_mask(path: &Path, threshold: f32) -> Result<LabelMask> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let mask = if matches!(ext.as_deref(), Some("pgm" | "pnm")) {
        let img = read_image(path)?;
        if img.channels() != 1 {
            bail!("{}: mask raster must be single-channel", path.display());
        }
        let labels = img
            .data()
            .iter()
            .map(|&v| ClassId::from(v as f32 / 255.0 > threshold))
            .collect();
        LabelMask::new(img.width(), img.height(), labels)
    } else {
        LabelMask::from_tensor(&load_tensor(path)?, threshold)
            .with_context(|| format!("mask {}", path.display()))?
    };
    Ok(mask)
}

fn load_image(path: &Path) -> Result<RasterImage> {
    Ok(read_image(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_register(a: RegisterArgs) -> Result<()> {
    let config = a.pipeline.config()?;
    let threshold = config.mask_threshold;
    let qf = load_tensor(&a.query_features)?;
    let qm = load_mask(&a.query_mask, threshold)?;
    let rf = load_tensor(&a.ref_features)?;
    let rm = load_mask(&a.ref_mask, threshold)?;
    let q = segsf::pipeline::extract_features(&qf, &qm, &config)
        .with_context(|| format!("query {}", a.query_features.display()))?;
    let r = segsf::pipeline::extract_features(&rf, &rm, &config)
        .with_context(|| format!("reference {}", a.ref_features.display()))?;
    log::info!("{} query / {} reference features", q.len(), r.len());

    let reg = match segsf::register_sets(&q, &r, &config) {
        Ok(reg) => reg,
        Err(e) if e.is_no_consensus() => return Err(NoConsensus(e).into()),
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &a.matches_out {
        write_text(path, &reg.matches.dump())?;
    }
    let doc = reg.document(config.ransac.seed).to_json();
    match &a.out {
        Some(path) => write_text(path, &doc)?,
        None => println!("{doc}"),
    }
    if let (Some(out), Some(qi), Some(ri)) = (&a.checkerboard, &a.query_image, &a.ref_image) {
        write_mosaic(&load_image(qi)?, &load_image(ri)?, &reg.model, a.tile, out)?;
    }
    Ok(())
}

fn write_mosaic(
    query: &RasterImage,
    reference: &RasterImage,
    model: &segsf::TransformModel,
    tile: usize,
    out: &Path,
) -> Result<()> {
    if query.channels() != reference.channels() {
        bail!(
            "query image has {} channels, reference has {}",
            query.channels(),
            reference.channels()
        );
    }
    let warped = warp_image(query, model, reference.width(), reference.height())?;
    let mosaic = checkerboard(&warped, reference, tile)?;
    write_image(&mosaic, out).with_context(|| format!("writing {}", out.display()))
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let config = a.pipeline.config()?;
    let angles = a.angles.clone().unwrap_or_else(|| DEFAULT_ANGLES.to_vec());
    if a.pairs == 0 {
        bail!("--pairs must be >= 1");
    }
    let stride = config.rf_state().jump;
    let specs = (0..a.pairs)
        .map(|i| a.synth.spec(a.first_pair_seed + i, stride))
        .collect::<Result<Vec<_>>>()?;
    let mut report = run_sweep(&specs, &angles, &config)?;
    if let Some(path) = &a.baseline {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let baseline = EvalReport::from_json(&text)
            .with_context(|| format!("parsing report {}", path.display()))?;
        report.compare_with(&baseline);
    }
    print!("{}", report.table());
    if let Some(path) = &a.out {
        write_text(path, &report.to_json())?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = a.shape.spec(a.seed, a.stride)?;
    let truth = rotate_about_center(a.angle, spec.width, spec.height);
    let pair = synth_pair(&spec, &truth)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let put_tensor = |name: &str, t: &Tensor| -> Result<()> {
        let path = a.out.join(name);
        write_tensor(t, &path).with_context(|| format!("writing {}", path.display()))
    };
    let put_image = |name: &str, img: &RasterImage| -> Result<()> {
        let path = a.out.join(name);
        write_image(img, &path).with_context(|| format!("writing {}", path.display()))
    };
    put_tensor("query_features.stf", &pair.query.features)?;
    put_tensor("query_mask.stf", &pair.query.mask.to_tensor())?;
    put_tensor("ref_features.stf", &pair.reference.features)?;
    put_tensor("ref_mask.stf", &pair.reference.mask.to_tensor())?;
    put_image("query.pgm", &pair.query.image)?;
    put_image("ref.pgm", &pair.reference.image)?;
    let truth_doc = TransformDocument::new(&truth, 0, 0, a.seed);
    write_text(&a.out.join("truth.json"), &truth_doc.to_json())?;
    println!(
        "wrote {} ({}x{}, {} channels, stride {}, angle {})",
        a.out.display(),
        spec.width,
        spec.height,
        spec.channels,
        spec.stride,
        a.angle
    );
    Ok(())
}

fn cmd_checkerboard(a: CheckerboardArgs) -> Result<()> {
    let text = fs::read_to_string(&a.transform)
        .with_context(|| format!("reading {}", a.transform.display()))?;
    let doc = TransformDocument::from_json(&text)
        .with_context(|| format!("parsing transform {}", a.transform.display()))?;
    let model = doc
        .model()
        .with_context(|| format!("transform {}", a.transform.display()))?;
    write_mosaic(
        &load_image(&a.query_image)?,
        &load_image(&a.ref_image)?,
        &model,
        a.tile,
        &a.out,
    )
}

fn cmd_rfcalc(a: RfcalcArgs) -> Result<()> {
    let layers = resolve_stack(&a.layers).context("--layers")?;
    println!("{}", format_stack(&layers));
    println!(
        "{:>5}  {:>10}  {:>6}  {:>6}  {:>8}",
        "stage", "layer", "jump", "rf", "start"
    );
    let names = std::iter::once("input".to_string()).chain(layers.iter().map(|l| l.to_string()));
    for (i, (name, s)) in names.zip(chain_stages(&layers)).enumerate() {
        println!(
            "{i:>5}  {name:>10}  {:>6}  {:>6}  {:>8}",
            s.jump, s.rf, s.start
        );
    }
    Ok(())
}
