use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use candle_core::Device;
use clap::{Parser, Subcommand, ValueEnum};
use rfbtd_core::evalproto::DEFAULT_IOU_THRESHOLD;
use rfbtd_core::postprocess::{NmsConfig, NmsMode};
use rfbtd_model::{Checkpoint, Detector};

use rfbtd_cli::config::TrainConfig;
use rfbtd_cli::evaluation::eval_dirs;
use rfbtd_cli::inference::{collect_inputs, infer_paths};
use rfbtd_cli::native::select_kernel;
use rfbtd_cli::rf_analyze::{analyze, Variant};
use rfbtd_cli::training::{train, TrainOptions};

#[derive(Parser)]
#[command(name = "rfbtd", version, about = "Rotated text detection: train, infer, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Overfit,
}

#[derive(Clone, Copy, ValueEnum)]
enum Merge {
    Standard,
    Locality,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Resume from this checkpoint (weights, optimizer state and step).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides run.output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Overrides run.max_steps.
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long, default_value_t = 10)]
        progress_every: u64,
    },
    /// Detect text in images and write `res_<key>.txt` submissions.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Image files or directories.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write annotated PNGs here.
        #[arg(long)]
        overlay_dir: Option<PathBuf>,
        /// Resize so the long side has this many pixels; 0 keeps the size.
        #[arg(long, default_value_t = 1280)]
        long_side: u32,
        #[arg(long)]
        score_threshold: Option<f64>,
        #[arg(long)]
        nms_iou: Option<f64>,
        #[arg(long, value_enum)]
        merge: Option<Merge>,
        /// Use the compiled suppression library if it can be loaded.
        #[arg(long)]
        use_native_nms: bool,
        /// Path of the compiled suppression library.
        #[arg(long)]
        native_lib: Option<PathBuf>,
        /// Unused by the network; accepted for reproducible invocations.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score submissions against ground truth.
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gts: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Receptive-field profiles of the refinement blocks.
    RfAnalyze {
        #[arg(long, value_enum, num_args = 1..)]
        variant: Vec<Variant>,
        /// Write `rf_<variant>.png` maps here.
        #[arg(long)]
        maps: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        map_size: u32,
    },
    /// Print a configuration template.
    PrintConfig {
        #[arg(long, value_enum, default_value_t = Preset::Default)]
        preset: Preset,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, checkpoint, output_dir, max_steps, progress_every } => {
            let mut cfg = TrainConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = output_dir {
                cfg.run.output_dir = d;
            }
            if let Some(m) = max_steps {
                cfg.run.max_steps = m;
            }
            let opts = TrainOptions { resume: checkpoint, device: Device::Cpu, progress_every };
            let m = train(&cfg, &opts)?;
            println!(
                "trained steps {}..{}{}; outputs in {}",
                m.start_step,
                m.final_step,
                if m.stopped_early { " (early stop)" } else { "" },
                cfg.run.output_dir.display()
            );
        }
        Command::Infer {
            checkpoint,
            input,
            out,
            overlay_dir,
            long_side,
            score_threshold,
            nms_iou,
            merge,
            use_native_nms,
            native_lib,
            seed: _,
        } => {
            let ck = Checkpoint::read(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let model = Detector::new(ck.config.clone(), 0, &Device::Cpu)?;
            ck.load_into(&model)?;
            let mut nms = NmsConfig::default();
            if let Some(t) = score_threshold {
                nms.score_threshold = t;
            }
            if let Some(t) = nms_iou {
                nms.nms_iou_threshold = t;
            }
            match merge {
                Some(Merge::Standard) => nms.merge_mode = NmsMode::Standard,
                Some(Merge::Locality) => nms.merge_mode = NmsMode::LocalityAware,
                None => {}
            }
            let (kernel, note) = select_kernel(use_native_nms, native_lib.as_deref());
            eprintln!("{note}");
            let inputs = collect_inputs(&input)?;
            let s = infer_paths(&model, &inputs, long_side, &nms, kernel.as_ref(), &out, overlay_dir.as_deref())?;
            println!("{} images, {} detections, {} skipped", s.processed, s.detections, s.failed.len());
        }
        Command::Eval { dets, gts, iou, json } => {
            let r = eval_dirs(&dets, &gts, iou)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                println!(
                    "precision {:.4}  recall {:.4}  f-score {:.4}  ({} matched, {} detections, {} ground truths)",
                    r.precision, r.recall, r.fscore, r.counts.matched, r.counts.detections, r.counts.ground_truths
                );
            }
        }
        Command::RfAnalyze { variant, maps, map_size } => {
            let variants = if variant.is_empty() { Variant::ALL.to_vec() } else { variant };
            let reports = analyze(&variants, maps.as_deref(), map_size)?;
            println!("{}", serde_json::to_string_pretty(&reports)?);
        }
        Command::PrintConfig { preset } => {
            let cfg = match preset {
                Preset::Default => TrainConfig::default(),
                Preset::Overfit => TrainConfig::overfit_smoke(),
            };
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
