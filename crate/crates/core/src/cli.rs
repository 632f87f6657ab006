//! Batch command-line front end.
//!
//! Every subcommand prints a line-oriented `key=value` report on stdout.
//! Parameters resolve with the precedence
//! `built-in defaults < --config file < CRYOVOX_WORKERS (workers only) < flags`.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::adapt::{
    self, LabelMode, PseudoLabel, DEFAULT_CONSISTENCY_WEIGHTS, DEFAULT_ETA,
    DEFAULT_MOMENTUM,
};
use crate::batch::{parallel_map, workers_from_env};
use crate::error::{Error, Result};
use crate::filters::{
    self, BilateralParams, Boundary, GradientOperator, DEFAULT_SIGMA_D, DEFAULT_SIGMA_R,
    DEFAULT_WINDOW_RADIUS,
};
use crate::io::{self, sample_subset, DatasetManifest, SubsetSpec};
use crate::spectral::{
    self, AveragingMode, HighPassSpec, NoiseExtractor, NoiseKind, NoiseModel,
    DEFAULT_KEEP_FRACTION, DEFAULT_N_SAMPLED,
};
use crate::volume::{self, Dims, Volume3D, DEFAULT_MASK_THRESHOLD};

/// Pipeline parameters, loadable from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub rho: f64,
    pub n_sampled: usize,
    pub seed: u64,
    pub averaging: String,
    pub sigma_d: f64,
    pub sigma_r: f64,
    pub window_radius: usize,
    pub boundary: String,
    pub gradient: String,
    pub eta: f64,
    pub momentum: f64,
    pub lambda: [f64; 4],
    pub mask_threshold: f32,
    pub resize_dims: [usize; 3],
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rho: DEFAULT_KEEP_FRACTION,
            n_sampled: DEFAULT_N_SAMPLED,
            seed: 0,
            averaging: "mean-of-variances".into(),
            sigma_d: DEFAULT_SIGMA_D,
            sigma_r: DEFAULT_SIGMA_R,
            window_radius: DEFAULT_WINDOW_RADIUS,
            boundary: "clamp".into(),
            gradient: "sobel".into(),
            eta: DEFAULT_ETA,
            momentum: DEFAULT_MOMENTUM,
            lambda: DEFAULT_CONSISTENCY_WEIGHTS,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            resize_dims: [32, 32, 32],
            workers: 1,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn bilateral(&self) -> Result<BilateralParams> {
        let p = BilateralParams {
            window_radius: self.window_radius,
            sigma_d: self.sigma_d,
            sigma_r: self.sigma_r,
            boundary: self.boundary.parse()?,
        };
        p.validate()?;
        Ok(p)
    }

    fn averaging_mode(&self) -> Result<AveragingMode> {
        match self.averaging.as_str() {
            "mean-of-variances" => Ok(AveragingMode::MeanOfVariances),
            "variance-of-mean" => Ok(AveragingMode::VarianceOfMean),
            other => Err(Error::invalid(format!("unknown averaging mode '{other}'"))),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cryovox", version, about = "Cryo-ET subtomogram noise and denoising toolkit")]
pub struct Cli {
    /// TOML file with pipeline parameters (flags take precedence).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for batch work [env: CRYOVOX_WORKERS].
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate target noise variance from a sampled subset of a manifest.
    ExtractNoise(ExtractNoiseArgs),
    /// Denoise one MRC volume (or every manifest volume) with ngm, bf or ibf.
    Denoise(DenoiseArgs),
    /// Synthesize noise and inject it into a source volume.
    Inject(InjectArgs),
    /// Threshold a probability volume into fg(1)/bg(0)/ignore(-1) labels.
    PseudoLabel(PseudoLabelArgs),
    /// Dice and IoU between a predicted and a ground-truth mask.
    Metrics(MetricsArgs),
    /// Resample a volume to new dimensions.
    Resize(ResizeArgs),
    /// Turn a grey-scale mask into a binary one.
    Binarize(BinarizeArgs),
    /// Time the denoisers on synthetic volumes.
    Bench(BenchArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Args)]
pub struct ExtractNoiseArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fraction of frequency bins kept by the high-pass filter.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub n_sampled: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// mean-of-variances or variance-of-mean.
    #[arg(long)]
    pub averaging: Option<String>,
    /// Directory receiving one `<stem>_noise.mrc` residual per sampled volume.
    #[arg(long)]
    pub residual_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ngm,
    Bf,
    Ibf,
}

impl Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ngm => "ngm",
            Method::Bf => "bf",
            Method::Ibf => "ibf",
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub sigma_d: Option<f64>,
    #[arg(long)]
    pub sigma_r: Option<f64>,
    #[arg(long)]
    pub radius: Option<usize>,
    /// clamp or mirror.
    #[arg(long)]
    pub boundary: Option<String>,
    /// sobel or laplacian (ibf only).
    #[arg(long)]
    pub gradient: Option<String>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    pub input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pub output: Option<PathBuf>,
    /// Denoise every volume listed in a manifest.
    #[arg(long, requires = "output_dir")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// gaussian, poisson or speckle.
    #[arg(long, default_value = "gaussian")]
    pub kind: String,
    /// Noise variance σ_t².
    #[arg(long)]
    pub sigma2: f64,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PseudoLabelArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Label only confident foreground; everything else is ignored.
    #[arg(long)]
    pub foreground_only: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Foreground iff value >= threshold.
    #[arg(long, default_value_t = 0.5)]
    pub pred_threshold: f32,
    /// Use the mask threshold (300) for raw grey-scale ground truth.
    #[arg(long, default_value_t = 0.5)]
    pub gt_threshold: f32,
}

#[derive(Debug, Args)]
pub struct ResizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Target `depth,height,width`.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Nearest-neighbour instead of trilinear (for label volumes).
    #[arg(long)]
    pub nearest: bool,
}

#[derive(Debug, Args)]
pub struct BinarizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub threshold: Option<f32>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "32,32,32")]
    pub dims: Vec<usize>,
    /// Single-volume repetitions per method.
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Volumes in the batch throughput run (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub batch: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub filter: FilterArgs,
}

/// Ordered `key=value` report.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Self::default();
        r.push("command", command);
        r
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.lines
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

/// Parses a rendered report back into key/value pairs.
pub fn parse_report(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

struct Context {
    config: PipelineConfig,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(n) = workers_from_env()? {
            config.workers = n;
        }
        if let Some(n) = cli.workers {
            config.workers = n;
        }
        if config.workers == 0 {
            return Err(Error::invalid("worker count must be >= 1"));
        }
        Ok(Self { config })
    }

    fn with_filter(&self, f: &FilterArgs) -> PipelineConfig {
        let mut c = self.config.clone();
        if let Some(v) = f.rho {
            c.rho = v;
        }
        if let Some(v) = f.sigma_d {
            c.sigma_d = v;
        }
        if let Some(v) = f.sigma_r {
            c.sigma_r = v;
        }
        if let Some(v) = f.radius {
            c.window_radius = v;
        }
        if let Some(v) = &f.boundary {
            c.boundary = v.clone();
        }
        if let Some(v) = &f.gradient {
            c.gradient = v.clone();
        }
        c
    }
}

/// Parses process arguments and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match run(&cli) {
        Ok(report) => {
            let _ = out.write_all(report.render().as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<Report> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::ExtractNoise(a) => cmd_extract_noise(&ctx, a),
        Command::Denoise(a) => cmd_denoise(&ctx, a),
        Command::Inject(a) => cmd_inject(&ctx, a),
        Command::PseudoLabel(a) => cmd_pseudo_label(&ctx, a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Resize(a) => cmd_resize(&ctx, a),
        Command::Binarize(a) => cmd_binarize(&ctx, a),
        Command::Bench(a) => cmd_bench(&ctx, a),
        Command::Config => {
            let mut r = Report::new("config");
            for line in ctx.config.to_toml().lines() {
                if let Some((k, v)) = line.split_once(" = ") {
                    r.push(k.trim(), v.trim());
                }
            }
            Ok(r)
        }
    }
}

fn dims_arg(d: &[usize]) -> Result<Dims> {
    match d {
        [depth, height, width] => Ok(Dims::new(*depth, *height, *width)),
        _ => Err(Error::invalid(format!("--dims takes depth,height,width, got {d:?}"))),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "volume".into())
}

fn cmd_extract_noise(ctx: &Context, a: &ExtractNoiseArgs) -> Result<Report> {
    let mut c = ctx.config.clone();
    if let Some(v) = a.rho {
        c.rho = v;
    }
    if let Some(v) = a.n_sampled {
        c.n_sampled = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = &a.averaging {
        c.averaging = v.clone();
    }
    let hp = HighPassSpec::new(c.rho)?;
    let mode = c.averaging_mode()?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let subset = sample_subset(&manifest, SubsetSpec::new(c.n_sampled, c.seed)?)?;

    let volumes = parallel_map(&subset, c.workers, |_, p| io::read_mrc(p))?;
    let dims = volumes[0].dims();
    for (v, p) in volumes.iter().zip(&subset) {
        if v.dims() != dims {
            return Err(Error::invalid(format!(
                "{} is {}, expected {dims}",
                p.display(),
                v.dims()
            )));
        }
    }
    let extractor = NoiseExtractor::new(dims, hp)?;
    let residuals = parallel_map(&volumes, c.workers, |_, v| extractor.extract(v))?;
    let estimate =
        spectral::combine_residuals(&residuals, extractor.mask().realized_fraction(), mode)?;

    let mut written = Vec::new();
    if let Some(dir) = &a.residual_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let targets: Vec<PathBuf> = subset
            .iter()
            .map(|p| dir.join(format!("{}_noise.mrc", stem(p))))
            .collect();
        let jobs: Vec<(&Volume3D, &PathBuf)> = residuals.iter().zip(&targets).collect();
        parallel_map(&jobs, c.workers, |_, (v, p)| io::write_mrc(v, p))?;
        written = targets;
    }

    let mut r = Report::new("extract-noise");
    r.push("manifest", a.manifest.display());
    r.push("dims", dims);
    r.push("rho", c.rho);
    r.push("rho_realized", estimate.realized_fraction);
    r.push("retained_bins", extractor.mask().retained());
    r.push("n_sampled", c.n_sampled);
    r.push("seed", c.seed);
    r.push("averaging", &c.averaging);
    r.push("sigma2", estimate.variance);
    for (i, (p, v)) in subset.iter().zip(&estimate.per_volume).enumerate() {
        r.push(format!("volume.{i}"), p.display());
        r.push(format!("variance.{i}"), v);
    }
    for (i, p) in written.iter().enumerate() {
        r.push(format!("residual.{i}"), p.display());
    }
    Ok(r)
}

/// Denoises one volume with the configured method.
pub fn denoise_volume(vol: &Volume3D, method: Method, c: &PipelineConfig) -> Result<Volume3D> {
    match method {
        Method::Ngm => spectral::ngm_denoise(vol, HighPassSpec::new(c.rho)?),
        Method::Bf => filters::bilateral_filter(vol, &c.bilateral()?),
        Method::Ibf => {
            let op: GradientOperator = c.gradient.parse()?;
            filters::improved_bilateral_filter_with(vol, &c.bilateral()?, op)
        }
    }
}

fn push_filter_params(r: &mut Report, method: Method, c: &PipelineConfig) {
    r.push("method", method);
    match method {
        Method::Ngm => r.push("rho", c.rho),
        Method::Bf | Method::Ibf => {
            r.push("sigma_d", c.sigma_d);
            r.push("sigma_r", c.sigma_r);
            r.push("window_radius", c.window_radius);
            r.push("boundary", &c.boundary);
            if method == Method::Ibf {
                r.push("gradient", &c.gradient);
            }
        }
    }
}

fn cmd_denoise(ctx: &Context, a: &DenoiseArgs) -> Result<Report> {
    let c = ctx.with_filter(&a.filter);
    // validate parameters before touching any file
    HighPassSpec::new(c.rho)?;
    c.bilateral()?;
    c.gradient.parse::<GradientOperator>()?;
    let _: Boundary = c.boundary.parse()?;

    let mut r = Report::new("denoise");
    push_filter_params(&mut r, a.method, &c);
    match (&a.input, &a.output, &a.manifest, &a.output_dir) {
        (Some(input), Some(output), None, _) => {
            let vol = io::read_mrc(input)?;
            let out = denoise_volume(&vol, a.method, &c)?;
            io::write_mrc(&out, output)?;
            r.push("input", input.display());
            r.push("output", output.display());
            r.push("dims", vol.dims());
        }
        (None, _, Some(manifest), Some(dir)) => {
            let m = DatasetManifest::load(manifest)?;
            let inputs: Vec<PathBuf> = m.entries.iter().map(|e| e.volume.clone()).collect();
            if inputs.is_empty() {
                return Err(Error::invalid("manifest lists no volumes"));
            }
            let outputs: Vec<PathBuf> = inputs
                .iter()
                .map(|p| dir.join(format!("{}.mrc", stem(p))))
                .collect();
            let mut unique = std::collections::HashSet::new();
            if let Some(dup) = outputs.iter().find(|p| !unique.insert(*p)) {
                return Err(Error::invalid(format!(
                    "two inputs map to output {}",
                    dup.display()
                )));
            }
            let volumes = parallel_map(&inputs, c.workers, |_, p| io::read_mrc(p))?;
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let jobs: Vec<(&Volume3D, &PathBuf)> = volumes.iter().zip(&outputs).collect();
            parallel_map(&jobs, c.workers, |_, (v, out)| {
                io::write_mrc(&denoise_volume(v, a.method, &c)?, out)
            })?;
            r.push("manifest", manifest.display());
            r.push("count", inputs.len());
            for (i, p) in outputs.iter().enumerate() {
                r.push(format!("output.{i}"), p.display());
            }
        }
        _ => return Err(Error::invalid("give --input/--output or --manifest/--output-dir")),
    }
    Ok(r)
}

fn cmd_inject(ctx: &Context, a: &InjectArgs) -> Result<Report> {
    let kind: NoiseKind = a.kind.parse()?;
    let seed = a.seed.unwrap_or(ctx.config.seed);
    let model = NoiseModel::new(kind, a.sigma2, seed)?;
    let src = io::read_mrc(&a.input)?;
    let noise = spectral::synthesize_noise(&model, src.dims())?;
    let out = spectral::inject_noise(&src, kind, &noise)?;
    io::write_mrc(&out, &a.output)?;
    let mut r = Report::new("inject");
    r.push("input", a.input.display());
    r.push("output", a.output.display());
    r.push("kind", kind);
    r.push("sigma2", a.sigma2);
    r.push("seed", seed);
    r.push("noise_variance_realized", volume::population_variance(&noise)?);
    Ok(r)
}

fn cmd_pseudo_label(ctx: &Context, a: &PseudoLabelArgs) -> Result<Report> {
    let eta = a.eta.unwrap_or(ctx.config.eta);
    let mode = if a.foreground_only {
        LabelMode::ForegroundOnly
    } else {
        LabelMode::Symmetric
    };
    let labels = adapt::pseudo_label_f32(&io::read_mrc(&a.input)?, eta, mode)?;
    io::write_mrc(&labels.to_volume(), &a.output)?;
    let mut r = Report::new("pseudo-label");
    r.push("input", a.input.display());
    r.push("output", a.output.display());
    r.push("eta", eta);
    r.push("foreground_only", a.foreground_only);
    r.push("foreground", labels.count(PseudoLabel::Foreground));
    r.push("background", labels.count(PseudoLabel::Background));
    r.push("ignore", labels.count(PseudoLabel::Ignore));
    Ok(r)
}

fn cmd_metrics(a: &MetricsArgs) -> Result<Report> {
    let pred = volume::binarize_mask(&io::read_mrc(&a.pred)?, a.pred_threshold);
    let gt = volume::binarize_mask(&io::read_mrc(&a.gt)?, a.gt_threshold);
    let mut r = Report::new("metrics");
    r.push("pred", a.pred.display());
    r.push("gt", a.gt.display());
    r.push("pred_foreground", pred.foreground_count());
    r.push("gt_foreground", gt.foreground_count());
    r.push("dice", adapt::dice(&pred, &gt)?);
    r.push("miou", adapt::miou(&pred, &gt)?);
    r.push("iou_foreground", adapt::class_iou(&pred, &gt, 1)?);
    r.push("iou_background", adapt::class_iou(&pred, &gt, 0)?);
    Ok(r)
}

fn cmd_resize(ctx: &Context, a: &ResizeArgs) -> Result<Report> {
    let d = a.dims.clone().unwrap_or_else(|| ctx.config.resize_dims.to_vec());
    let target = dims_arg(&d)?;
    let vol = io::read_mrc(&a.input)?;
    let out = if a.nearest {
        volume::resize_nearest(&vol, target)?
    } else {
        volume::resize_trilinear(&vol, target)?
    };
    io::write_mrc(&out, &a.output)?;
    let mut r = Report::new("resize");
    r.push("input", a.input.display());
    r.push("output", a.output.display());
    r.push("from", vol.dims());
    r.push("to", target);
    r.push("interpolation", if a.nearest { "nearest" } else { "trilinear" });
    Ok(r)
}

fn cmd_binarize(ctx: &Context, a: &BinarizeArgs) -> Result<Report> {
    let threshold = a.threshold.unwrap_or(ctx.config.mask_threshold);
    let mask = volume::binarize_mask(&io::read_mrc(&a.input)?, threshold);
    io::write_mrc(&mask.to_volume(), &a.output)?;
    let mut r = Report::new("binarize");
    r.push("input", a.input.display());
    r.push("output", a.output.display());
    r.push("threshold", threshold);
    r.push("foreground", mask.foreground_count());
    Ok(r)
}

/// Keys of the bench report whose values are wall-clock measurements.
pub fn is_timing_key(key: &str) -> bool {
    key.ends_with("_ms") || key.ends_with("_speedup")
}

fn cmd_bench(ctx: &Context, a: &BenchArgs) -> Result<Report> {
    let c = ctx.with_filter(&a.filter);
    let seed = a.seed.unwrap_or(c.seed);
    if a.reps == 0 {
        return Err(Error::invalid("--reps must be >= 1"));
    }
    let dims = dims_arg(&a.dims)?;
    let model = NoiseModel::new(NoiseKind::Gaussian, 1.0, seed)?;
    let vol = spectral::synthesize_noise(&model, dims)?;

    let mut r = Report::new("bench");
    r.push("dims", dims);
    r.push("reps", a.reps);
    r.push("workers", c.workers);
    for method in [Method::Ngm, Method::Bf, Method::Ibf] {
        let start = Instant::now();
        let mut out = None;
        for _ in 0..a.reps {
            out = Some(denoise_volume(&vol, method, &c)?);
        }
        let ms = start.elapsed().as_secs_f64() * 1e3 / a.reps as f64;
        let out = out.expect("reps >= 1");
        r.push(format!("{method}.checksum"), format!("{:.6e}", out.mean()));
        r.push(format!("{method}.per_volume_ms"), format!("{ms:.3}"));
    }
    if a.batch > 0 {
        let streams: Vec<u64> = (0..a.batch as u64).collect();
        let batch = parallel_map(&streams, c.workers.min(a.batch), |_, &s| {
            spectral::synthesize_noise_stream(&model, dims, s)
        })?;
        let time = |workers: usize| -> Result<f64> {
            let start = Instant::now();
            parallel_map(&batch, workers, |_, v| denoise_volume(v, Method::Ibf, &c))?;
            Ok(start.elapsed().as_secs_f64() * 1e3)
        };
        let serial = time(1)?;
        let parallel = time(c.workers)?;
        r.push("batch.volumes", a.batch);
        r.push("batch.ibf.serial_ms", format!("{serial:.3}"));
        r.push("batch.ibf.parallel_ms", format!("{parallel:.3}"));
        r.push("batch.ibf_speedup", format!("{:.3}", serial / parallel));
    }
    Ok(r)
}
