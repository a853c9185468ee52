use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use keypoly::commands::{self, EvaluateRequest, PipelineInput, PipelineRequest};
use keypoly::config::{ConfigOverrides, PipelineConfig};
use keypoly::io::{self, ReportFormat};
use keypoly::metrics::SsimOperand;
use keypoly::synth::{ShapeKind, SynthConfig};
use keypoly::{Error, Result};

#[derive(Parser)]
#[command(name = "keypoly", version, about = "Keypoint heatmaps to building polygons, masks and accuracy reports")]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalFlags {
    /// `key = value` config file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Peak threshold
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Peak window side (odd)
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Gaussian standard deviation in pixels
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Kernel cutoff in pixels [default: ceil(3 sigma)]
    #[arg(long, global = true)]
    truncation_radius: Option<f64>,
    /// Focal loss alpha
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Focal loss beta
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Focal loss normalizer (number of objects)
    #[arg(long, global = true)]
    n_objects: Option<usize>,
    /// Boundary match tolerance in pixels
    #[arg(long, global = true)]
    boundary_tolerance: Option<f64>,
    /// Map SSIM is computed on [default: boundary]
    #[arg(long, global = true, value_enum)]
    ssim_operand: Option<OperandArg>,
    /// [default: csv]
    #[arg(long, global = true, value_enum)]
    report_format: Option<FormatArg>,
    /// Report metrics as percentages
    #[arg(long, global = true)]
    percent: bool,
    /// Synthetic corpus seed [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OperandArg {
    Boundary,
    Mask,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Convex,
    Rectilinear,
}

#[derive(Subcommand)]
enum Command {
    /// Render a Gaussian target heatmap from keypoints JSON
    RenderTarget {
        #[arg(long)]
        keypoints: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Extract keypoints from a heatmap
    DetectPeaks {
        #[arg(long)]
        heatmap: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Chain keypoints into a polygon by nearest-neighbor grouping
    Polygonize {
        #[arg(long)]
        keypoints: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Rasterize a polygon into a mask (PGM, or HMAP for other extensions)
    Rasterize {
        #[arg(long)]
        polygon: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the boundary map
        #[arg(long)]
        boundary_out: Option<PathBuf>,
    },
    /// Focal loss of a predicted heatmap against a target
    FocalLoss {
        #[arg(long)]
        prediction: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        gradient_out: Option<PathBuf>,
    },
    /// Compare predicted masks with same-named truth masks
    Evaluate {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        truth_dir: PathBuf,
        /// Report file; stdout when omitted
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Label of the aggregate row
        #[arg(long, default_value = "proposed")]
        method: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Stamp the report with the current time
        #[arg(long)]
        timestamp: bool,
    },
    /// Heatmap -> peaks -> polygon -> mask, with optional scoring
    Pipeline {
        /// A heatmap file or a directory of `.hmap` files
        #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
        heatmap: Option<PathBuf>,
        /// Use noisy heatmaps from the synthetic generator
        #[arg(long)]
        synthetic: bool,
        /// Truth mask (file input) or directory of truth masks
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Report to append to; defaults to `<output-dir>/report.<format>`
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Write a synthetic corpus with a manifest
    Synth {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        synth: SynthArgs,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    count: u64,
    /// First sample index
    #[arg(long, default_value_t = 0)]
    start: u64,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 5)]
    min_vertices: usize,
    #[arg(long, default_value_t = 12)]
    max_vertices: usize,
    #[arg(long, value_enum, default_value = "convex")]
    shape: ShapeArg,
    /// Uniform noise amplitude added to the heatmaps
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

impl SynthArgs {
    fn config(&self, cfg: &PipelineConfig) -> SynthConfig {
        SynthConfig {
            seed: cfg.seed,
            dims: (self.height, self.width),
            n_vertices: (self.min_vertices, self.max_vertices),
            shape_kind: match self.shape {
                ShapeArg::Convex => ShapeKind::Convex,
                ShapeArg::Rectilinear => ShapeKind::Rectilinear,
            },
            noise_amplitude: self.noise,
            gaussian: cfg.gaussian,
        }
    }
}

impl GlobalFlags {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            tau: self.tau,
            window: self.window,
            sigma: self.sigma,
            truncation_radius: self.truncation_radius,
            alpha: self.alpha,
            beta: self.beta,
            n_objects: self.n_objects,
            epsilon: None,
            boundary_tolerance: self.boundary_tolerance,
            ssim_operand: self.ssim_operand.map(|o| match o {
                OperandArg::Boundary => SsimOperand::Boundary,
                OperandArg::Mask => SsimOperand::Mask,
            }),
            output_dir: None,
            report_format: self.report_format.map(|f| match f {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Json => ReportFormat::Json,
            }),
            percent: self.percent.then_some(true),
            seed: self.seed,
        }
    }

    fn resolve(&self, output_dir: Option<&Path>) -> Result<PipelineConfig> {
        let file = match &self.config {
            Some(path) => Some(
                io::read_to_string(path)
                    .and_then(|t| ConfigOverrides::parse(&t))
                    .map_err(|e| e.in_file(path))?,
            ),
            None => None,
        };
        let mut flags = self.overrides();
        flags.output_dir = output_dir.map(Path::to_path_buf);
        PipelineConfig::resolve(file.as_ref(), &flags)
    }
}

fn run(cli: Cli) -> Result<i32> {
    let g = &cli.global;
    match cli.command {
        Command::RenderTarget {
            keypoints,
            height,
            width,
            out,
        } => {
            let cfg = g.resolve(None)?;
            commands::cmd_render_target(&keypoints, (height, width), &cfg.gaussian, &out)?;
        }
        Command::DetectPeaks { heatmap, out } => {
            let cfg = g.resolve(None)?;
            let peaks = commands::cmd_detect_peaks(&heatmap, &cfg.peak, &out)?;
            eprintln!("{} peaks", peaks.len());
        }
        Command::Polygonize { keypoints, out } => {
            g.resolve(None)?;
            let (polygon, trace) = commands::cmd_polygonize(&keypoints, &out)?;
            if trace.tie_events > 0 {
                eprintln!("warning: {} nearest-neighbor ties broken by (row, col)", trace.tie_events);
            }
            if polygon.is_self_intersecting() {
                eprintln!("warning: polygon is self-intersecting");
            }
        }
        Command::Rasterize {
            polygon,
            height,
            width,
            out,
            boundary_out,
        } => {
            g.resolve(None)?;
            let r = commands::cmd_rasterize(&polygon, (height, width), &out, boundary_out.as_deref())?;
            if r.degenerate {
                eprintln!("warning: degenerate polygon; wrote an empty mask");
            }
        }
        Command::FocalLoss {
            prediction,
            target,
            gradient_out,
        } => {
            let cfg = g.resolve(None)?;
            let loss = commands::cmd_focal_loss(&prediction, &target, &cfg, gradient_out.as_deref())?;
            println!("{loss:.6}");
        }
        Command::Evaluate {
            pred_dir,
            truth_dir,
            out,
            method,
            jobs,
            timestamp,
        } => {
            let cfg = g.resolve(None)?;
            let req = EvaluateRequest {
                pred_dir,
                truth_dir,
                method,
                jobs,
                timestamp,
            };
            let table = commands::cmd_evaluate(&req, &cfg)?;
            let text = table.render(cfg.report_format, cfg.percent);
            match out {
                Some(path) => io::write_atomic(&path, text.as_bytes())?,
                None => print!("{text}"),
            }
            if !table.warnings.is_empty() {
                eprintln!("{} warnings", table.warnings.len());
            }
        }
        Command::Pipeline {
            heatmap,
            synthetic,
            truth,
            output_dir,
            report,
            jobs,
            synth,
        } => {
            let cfg = g.resolve(output_dir.as_deref())?;
            let input = match heatmap {
                Some(p) if p.is_dir() => PipelineInput::Dir(p),
                Some(p) => PipelineInput::File(p),
                None => {
                    debug_assert!(synthetic);
                    PipelineInput::Synthetic {
                        cfg: synth.config(&cfg),
                        start: synth.start,
                        count: synth.count,
                    }
                }
            };
            let req = PipelineRequest {
                input,
                truth,
                report,
                jobs,
            };
            let summary = commands::cmd_pipeline(&req, &cfg)?;
            for (stem, e) in &summary.failures {
                eprintln!("{stem}: {e}");
            }
            if !summary.failures.is_empty() {
                eprintln!(
                    "{} of {} patches failed",
                    summary.failures.len(),
                    summary.failures.len() + summary.processed.len()
                );
            }
            return Ok(summary.exit_code());
        }
        Command::Synth {
            output_dir,
            jobs,
            synth,
        } => {
            let cfg = g.resolve(None)?;
            let manifest = commands::cmd_synth(&synth.config(&cfg), synth.start, synth.count, &output_dir, jobs)?;
            eprintln!("{} samples", manifest.samples.len());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn one_line(e: &Error) -> String {
    e.to_string().replace('\n', " ")
}
