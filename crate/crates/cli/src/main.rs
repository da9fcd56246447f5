use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ridgeflow::batch::{run_batch, BatchOptions, Emit};
use ridgeflow::eval::{evaluate, Estimates, DEFAULT_BORDER_MARGIN};
use ridgeflow::io::{
    read_curvature, read_frequency, read_image, read_mask, read_orientation, write_curvature, write_frequency,
    write_image, write_mask, write_orientation,
};
use ridgeflow::pipeline::{estimate_curvature, estimate_frequency, estimate_orientation};
use ridgeflow::render::{render_curvature, render_frequency, render_orientation};
use ridgeflow::synth::{gen_concentric, gen_parallel, GroundTruth};
use ridgeflow::{enhance, Error, FilterKind, GrayImage, PipelineConfig, RfMethod, WindowShape};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "ridgeflow", version, about = "Curved Gabor enhancement of ridge-pattern images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance one image.
    Enhance {
        input: PathBuf,
        /// Enhanced image (.pgm or .png).
        #[arg(short, long)]
        output: PathBuf,
        /// Foreground mask image; nonzero is foreground.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Rasters written next to the output: of, rf, curvature.
        #[arg(long, default_value = "")]
        emit: String,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Orientation field after fusion and reconstruction.
    Ofield(StageArgs),
    /// Ridge frequency image.
    Rfmap(StageArgs),
    /// Curvature map.
    Curvature(StageArgs),
    /// Generate a synthetic pattern with its ground truth.
    Synth(SynthArgs),
    /// Score estimates against a synthetic ground truth.
    Eval(EvalArgs),
    /// Enhance every PGM/PNG image of a directory.
    Batch {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value = "")]
        emit: String,
        /// Files processed concurrently; 0 uses one worker per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named filter parameter set.
    #[arg(long)]
    preset: Option<String>,
    /// Ridge frequency estimator: curved or xsig.
    #[arg(long)]
    rf_method: Option<String>,
    /// Filter window: full or ellipse.
    #[arg(long)]
    window: Option<String>,
    /// Filter layout: curved or straight.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    sigma_x: Option<f64>,
    #[arg(long)]
    sigma_y: Option<f64>,
    /// Region size as ROWSxCOLS (odd counts, e.g. 33x65), applied to the
    /// estimation regions and the filter window.
    #[arg(long)]
    region: Option<String>,
}

#[derive(Args)]
struct StageArgs {
    input: PathBuf,
    /// Text raster output.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Also write a PNG visualization.
    #[arg(long)]
    render: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternArg {
    Parallel,
    Concentric,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(value_enum)]
    kind: PatternArg,
    /// Output directory for image.png, clean.png, mask.png and truth rasters.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    #[arg(long, default_value_t = 10.0)]
    period: f64,
    /// Wave vector direction in radians (parallel).
    #[arg(long, default_value_t = 0.0)]
    angle: f64,
    /// Ring center as X,Y (concentric); defaults to the image center.
    #[arg(long)]
    center: Option<String>,
    #[arg(long, default_value_t = 40.0)]
    inner_radius: f64,
    #[arg(long, default_value_t = 100.0)]
    contrast: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory written by `synth`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    of: Option<PathBuf>,
    #[arg(long)]
    rf: Option<PathBuf>,
    #[arg(long)]
    curvature: Option<PathBuf>,
    #[arg(long)]
    enhanced: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BORDER_MARGIN)]
    margin: usize,
    /// Report file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidParameter(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn parse_region(s: &str) -> CliResult<(usize, usize)> {
    let bad = || Failure::usage(format!("--region expects ROWSxCOLS with odd counts, got `{s}`"));
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let r: usize = r.trim().parse().map_err(|_| bad())?;
    let c: usize = c.trim().parse().map_err(|_| bad())?;
    if r < 3 || c < 3 || r % 2 == 0 || c % 2 == 0 {
        return Err(bad());
    }
    Ok((r / 2, c / 2))
}

fn usage_err<E: std::fmt::Display>(e: E) -> Failure {
    Failure::usage(e.to_string())
}

impl PipelineArgs {
    /// Configuration file (or defaults), then preset, then individual flags.
    fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path).map_err(usage_err)?,
            None => PipelineConfig::default(),
        };
        if let Some(name) = &self.preset {
            cfg.gabor = PipelineConfig::with_preset(name).map_err(usage_err)?.gabor;
        }
        if let Some(m) = &self.rf_method {
            cfg.frequency.method = m.parse::<RfMethod>().map_err(usage_err)?;
        }
        if let Some(w) = &self.window {
            cfg.gabor.window = w.parse::<WindowShape>().map_err(usage_err)?;
        }
        if let Some(f) = &self.filter {
            cfg.gabor.filter = f.parse::<FilterKind>().map_err(usage_err)?;
        }
        if let Some(s) = self.sigma_x {
            cfg.gabor.sigma_x = s;
        }
        if let Some(s) = self.sigma_y {
            cfg.gabor.sigma_y = s;
        }
        if let Some(r) = &self.region {
            let (p, q) = parse_region(r)?;
            (cfg.region.p, cfg.region.q) = (p, q);
            (cfg.gabor.p, cfg.gabor.q) = (p, q);
        }
        cfg.validate().map_err(usage_err)?;
        Ok(cfg)
    }
}

fn load_input(path: &Path, mask: Option<&Path>) -> CliResult<GrayImage> {
    let img = read_image(path)?;
    Ok(match mask {
        Some(m) => {
            let mask = read_mask(m)?;
            let combined = mask.iter().zip(img.mask()).map(|(&a, &b)| a && b).collect();
            img.with_mask(combined)?
        }
        None => img,
    })
}

/// `<dir>/<stem>.<suffix>` next to `output`.
fn sibling(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}.{suffix}"))
}

fn run_enhance(input: &Path, output: &Path, mask: Option<&Path>, emit: &str, args: &PipelineArgs) -> CliResult<()> {
    let cfg = args.resolve()?;
    let emit: Emit = emit.parse().map_err(usage_err)?;
    let img = load_input(input, mask)?;
    let res = enhance(&img, &cfg)?;
    write_image(&res.enhanced, output)?;
    if emit.orientation {
        write_orientation(&res.of, sibling(output, "of.txt"))?;
    }
    if emit.frequency {
        write_frequency(&res.rf, sibling(output, "rf.txt"))?;
    }
    if emit.curvature {
        write_curvature(&res.curvature, sibling(output, "curv.txt"))?;
    }
    let d = &res.diagnostics;
    for (stage, t) in &d.timings {
        eprintln!("{:<15} {:>9.1} ms", stage.name(), t.as_secs_f64() * 1e3);
    }
    eprintln!(
        "rf estimated {} filled {} fallback {}; filter passed through {} low presence {}",
        d.frequency.estimated, d.frequency.filled, d.frequency.fallback, d.filter.passed_through, d.filter.low_presence
    );
    Ok(())
}

#[derive(Clone, Copy)]
enum StageKind {
    Orientation,
    Frequency,
    Curvature,
}

fn run_stage(kind: StageKind, a: &StageArgs) -> CliResult<()> {
    let cfg = a.pipeline.resolve()?;
    let img = load_input(&a.input, a.mask.as_deref())?;
    match kind {
        StageKind::Orientation => {
            let (_, stages, _) = estimate_orientation(&img, &cfg)?;
            write_orientation(&stages.of, &a.output)?;
            if let Some(r) = &a.render {
                render_orientation(&img, &stages.of, 12).write_png(r)?;
            }
        }
        StageKind::Frequency => {
            let (rf, _, d) = estimate_frequency(&img, &cfg)?;
            write_frequency(&rf, &a.output)?;
            if let Some(r) = &a.render {
                render_frequency(&rf).write_png(r)?;
            }
            eprintln!("estimated {} rejected {}", d.frequency.estimated, d.frequency.rejected.total());
            for (reason, n) in d.frequency.rejected.iter() {
                eprintln!("  {reason}: {n}");
            }
        }
        StageKind::Curvature => {
            let (c, _, _) = estimate_curvature(&img, &cfg)?;
            write_curvature(&c, &a.output)?;
            if let Some(r) = &a.render {
                render_curvature(&c).write_png(r)?;
            }
        }
    }
    Ok(())
}

fn run_synth(a: &SynthArgs) -> CliResult<()> {
    let pat = match a.kind {
        PatternArg::Parallel => gen_parallel(a.width, a.height, a.period, a.angle, a.contrast, a.noise, a.seed)?,
        PatternArg::Concentric => {
            let center = match &a.center {
                Some(s) => {
                    let bad = || Failure::usage(format!("--center expects X,Y, got `{s}`"));
                    let (x, y) = s.split_once(',').ok_or_else(bad)?;
                    [x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?]
                }
                None => [(a.width as f64 - 1.0) / 2.0, (a.height as f64 - 1.0) / 2.0],
            };
            gen_concentric(a.width, a.height, a.period, center, a.inner_radius, a.contrast, a.noise, a.seed)?
        }
    };
    let dir = &a.output;
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let t = &pat.truth;
    write_image(&pat.image, dir.join("image.png"))?;
    write_image(&t.clean, dir.join("clean.png"))?;
    write_mask(t.clean.width(), t.clean.height(), t.clean.mask(), dir.join("mask.png"))?;
    write_orientation(&t.of, dir.join("truth.of.txt"))?;
    write_frequency(&t.rf, dir.join("truth.rf.txt"))?;
    write_curvature(&t.curvature, dir.join("truth.curv.txt"))?;
    Ok(())
}

fn run_eval(a: &EvalArgs) -> CliResult<()> {
    let dir = &a.truth;
    // The clean pattern is stored quantized; the correlation is insensitive to that.
    let clean = load_input(&dir.join("clean.png"), Some(&dir.join("mask.png")))?;
    let truth = GroundTruth {
        clean,
        of: read_orientation(dir.join("truth.of.txt"))?,
        rf: read_frequency(dir.join("truth.rf.txt"))?,
        curvature: read_curvature(dir.join("truth.curv.txt"))?,
    };
    let of = a.of.as_ref().map(read_orientation).transpose()?;
    let rf = a.rf.as_ref().map(read_frequency).transpose()?;
    let curvature = a.curvature.as_ref().map(read_curvature).transpose()?;
    let enhanced = a.enhanced.as_ref().map(read_image).transpose()?;
    let est = Estimates {
        of: of.as_ref(),
        rf: rf.as_ref(),
        curvature: curvature.as_ref(),
        enhanced: enhanced.as_ref(),
    };
    let report = evaluate(&est, &truth, a.margin)?.to_string();
    match &a.output {
        Some(path) => std::fs::write(path, report).map_err(|e| Error::from(e).in_file(path))?,
        None => print!("{report}"),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Enhance {
            input,
            output,
            mask,
            emit,
            pipeline,
        } => run_enhance(&input, &output, mask.as_deref(), &emit, &pipeline),
        Command::Ofield(a) => run_stage(StageKind::Orientation, &a),
        Command::Rfmap(a) => run_stage(StageKind::Frequency, &a),
        Command::Curvature(a) => run_stage(StageKind::Curvature, &a),
        Command::Synth(a) => run_synth(&a),
        Command::Eval(a) => run_eval(&a),
        Command::Batch {
            input,
            output,
            emit,
            jobs,
            pipeline,
        } => {
            let cfg = pipeline.resolve()?;
            let emit: Emit = emit.parse().map_err(usage_err)?;
            let summary = run_batch(&input, &output, &cfg, BatchOptions { emit, jobs })?;
            let failed = summary.failures();
            eprintln!("{} files, {} failed", summary.records.len(), failed);
            if failed > 0 {
                return Err(Failure {
                    code: EXIT_FAILURE,
                    message: format!("{failed} file(s) failed; see {}", output.join("summary.tsv").display()),
                });
            }
            Ok(())
        }
        Command::Config { pipeline } => {
            print!("{}", pipeline.resolve()?.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
