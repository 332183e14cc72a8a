use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dift::bench::{benchmark, dense_heatmap_threaded, report_csv};
use dift::dataset::{load_dataset, load_images, write_synth_set};
use dift::export::{annotate, detections_csv, export_kernels, loss_csv, write_heatmaps, write_text};
use dift::landmarks::Grouping;
use dift::model_io::{load_model, save_model};
use dift::{pnm, Error, Result};
use dift_core::saccade::{detect, quantize_heatmap, DetectMode, DetectParams, NetworkScorer};
use dift_core::sampler::{PatchSpec, SamplingMode, SynthSpec};
use dift_core::trainer::{train_with, TrainConfig, INIT_STREAM};
use dift_core::{ArchConfig, Model, SeededRng};

#[derive(Parser)]
#[command(name = "dift", version, about = "Distance-to-feature training and saccaded search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Dense,
    Saccade,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    Uniform,
    Saccade,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic labeled scenes and their landmark file.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes the model file and loss.csv beside it.
    Train {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        landmarks: PathBuf,
        #[arg(long, default_value_t = 1000)]
        batches: usize,
        #[arg(long, default_value_t = 32)]
        batchsize: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f32,
        #[arg(long, default_value_t = 0.9)]
        momentum: f32,
        #[arg(long, default_value_t = 35)]
        patch: usize,
        /// Minimum patch-center distance from the image edge [default: patch/2].
        #[arg(long)]
        border: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        dropout: f32,
        #[arg(long, value_enum, default_value_t = Sampling::Uniform)]
        sampling: Sampling,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace path [default: loss.csv next to --out].
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        /// Do not print the running loss.
        #[arg(long)]
        quiet: bool,
    },
    /// Dense score heatmaps as per-channel PGMs and an RGB PPM.
    Heatmap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Also write the three-level quantized maps.
        #[arg(long)]
        quantize: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Locate features; writes a detections CSV and an annotated PPM.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = 0.5)]
        threshold: f32,
        #[arg(long, default_value_t = 20.0)]
        nms: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare dense and saccade detection over a directory of images.
    Benchmark {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Export the first-layer kernels as PGMs named PREFIX0.pgm … PREFIX8.pgm.
    Kernels {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")))
    }
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found")))
    }
}

fn parent_dir(p: &Path) -> &Path {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn positive_threads(t: usize) -> Result<usize> {
    if t == 0 {
        return Err(Error::Usage("--threads must be at least 1".into()));
    }
    Ok(t)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { count, seed, out } => {
            let lm = write_synth_set(&out, count, seed, &SynthSpec::default())?;
            println!("wrote {count} images and {}", lm.display());
        }
        Command::Train {
            images,
            landmarks,
            batches,
            batchsize,
            lr,
            momentum,
            patch,
            border,
            dropout,
            sampling,
            seed,
            out,
            loss_csv: loss_path,
            quiet,
        } => {
            require_dir(&images)?;
            require_file(&landmarks)?;
            require_dir(parent_dir(&out))?;
            let loss_path = loss_path.unwrap_or_else(|| parent_dir(&out).join("loss.csv"));
            require_dir(parent_dir(&loss_path))?;
            let mut spec = PatchSpec::new(patch);
            if let Some(b) = border {
                spec = spec.with_border(b);
            }
            let cfg = TrainConfig {
                batches,
                batch_size: batchsize,
                lr,
                momentum,
                seed,
                patch: spec,
                sampling: match sampling {
                    Sampling::Uniform => SamplingMode::Uniform,
                    Sampling::Saccade => SamplingMode::SaccadeCentered,
                },
                ..TrainConfig::default()
            };
            cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
            let arch = ArchConfig {
                patch_size: patch,
                dropout,
                ..ArchConfig::default()
            };
            arch.validate().map_err(|e| Error::Usage(e.to_string()))?;
            let dataset = load_dataset(&images, &landmarks, &Grouping::default())?;
            let model = Model::init(arch, &mut SeededRng::stream(seed, INIT_STREAM))?;
            let (model, trace) = train_with(model, &dataset, &cfg, |i, _, running| {
                if !quiet {
                    println!("{i} : {running:.7}");
                }
            })?;
            save_model(&model, &out)?;
            write_text(&loss_path, &loss_csv(&trace))?;
        }
        Command::Heatmap {
            model,
            image,
            quantize,
            out,
            threads,
        } => {
            let threads = positive_threads(threads)?;
            require_file(&model)?;
            require_file(&image)?;
            require_dir(&out)?;
            let model = load_model(&model, None)?;
            let img = pnm::read_image(&image)?;
            let field = dense_heatmap_threaded(&model, &img, threads)?;
            let name = stem(&image);
            write_heatmaps(&field, img.width(), img.height(), &out, &name)?;
            if quantize {
                write_heatmaps(&quantize_heatmap(&field), img.width(), img.height(), &out, &format!("{name}_q"))?;
            }
        }
        Command::Detect {
            model,
            image,
            mode,
            threshold,
            nms,
            out,
        } => {
            require_file(&model)?;
            require_file(&image)?;
            require_dir(&out)?;
            let model = load_model(&model, None)?;
            let img = pnm::read_image(&image)?;
            let params = DetectParams {
                threshold,
                nms_radius: nms,
                ..DetectParams::default()
            };
            let mode = match mode {
                Mode::Dense => DetectMode::Dense,
                Mode::Saccade => DetectMode::Saccade,
            };
            let run = detect(&mut NetworkScorer::new(&model), &img, mode, &params)?;
            let name = stem(&image);
            write_text(&out.join(format!("{name}_detections.csv")), &detections_csv(&run))?;
            pnm::write_image(&out.join(format!("{name}_detections.ppm")), &annotate(&img, &run))?;
            println!("{} detections, {} evals", run.detections.len(), run.evals);
        }
        Command::Benchmark {
            model,
            images,
            out,
            threads,
        } => {
            let threads = positive_threads(threads)?;
            require_file(&model)?;
            require_dir(&images)?;
            require_dir(parent_dir(&out))?;
            let model = load_model(&model, None)?;
            let imgs = load_images(&images)?;
            if imgs.is_empty() {
                return Err(Error::format(&images, None, "no .ppm or .pgm images"));
            }
            let rows = benchmark(&model, &imgs, &DetectParams::default(), threads)?;
            let report = report_csv(&rows, model.channels());
            write_text(&out, &report)?;
            print!("{}", report.lines().last().map(|l| format!("{l}\n")).unwrap_or_default());
        }
        Command::Kernels { model, out } => {
            require_file(&model)?;
            require_dir(parent_dir(&out))?;
            let model = load_model(&model, None)?;
            for p in export_kernels(&model, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
