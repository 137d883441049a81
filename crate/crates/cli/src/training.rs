//! The training loop: sampling, optimisation, logging, checkpoints and
//! early stopping.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use candle_core::Device;
use rfbtd_core::evalproto::{aggregate, evaluate, EvalResult};
use rfbtd_core::kernel::ReferenceKernel;
use rfbtd_core::labelgen::{build_targets, sample_crop, TargetConfig, TrainTarget};
use rfbtd_core::losses::LossReport;
use rfbtd_core::postprocess::NmsConfig;
use rfbtd_core::OUTPUT_STRIDE;
use rfbtd_model::preprocess::batch_tensor;
use rfbtd_model::train::train_step;
use rfbtd_model::{checkpoint, AdaGrad, Checkpoint, Detector};
use serde::{Deserialize, Serialize};

use crate::config::{lr_schedule, TrainConfig};
use crate::dataset::{sample, Dataset};
use crate::inference::detect_image;

pub const LOG_FILE: &str = "train_log.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LAST_CHECKPOINT: &str = "last.safetensors";
pub const BEST_CHECKPOINT: &str = "best.safetensors";

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub total: f64,
    pub score_loss: f64,
    pub geo_loss: f64,
    pub iou_term: f64,
    pub angle_term: f64,
    pub lr: f64,
}

impl StepRecord {
    fn new(step: u64, r: &LossReport, lr: f64) -> Self {
        Self {
            step,
            total: r.total,
            score_loss: r.score_loss,
            geo_loss: r.geo_loss,
            iou_term: r.iou_term,
            angle_term: r.angle_term,
            lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    /// Completed optimisation steps.
    pub step: u64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub step: u64,
    pub fscore: f64,
}

/// Summary of a training run, also written to `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub code_version: String,
    pub seed: u64,
    pub start_step: u64,
    pub final_step: u64,
    pub log: PathBuf,
    pub checkpoints: Vec<CheckpointEntry>,
    pub validations: Vec<Validation>,
    pub stopped_early: bool,
    /// Records of this invocation, also appended to the log file.
    #[serde(skip)]
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub resume: Option<PathBuf>,
    pub device: Device,
    /// Print a progress line every this many steps (0 = silent).
    pub progress_every: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { resume: None, device: Device::Cpu, progress_every: 0 }
    }
}

pub fn load_training_set(cfg: &TrainConfig) -> Result<Dataset> {
    let d = &cfg.data;
    if d.synthetic_scenes > 0 {
        return Ok(Dataset::synthetic(d.synthetic_scenes, d.crop_size, cfg.seed));
    }
    match (&d.train_images, &d.train_gts) {
        (Some(i), Some(g)) => Dataset::from_dirs(i, g),
        _ => bail!("no training data configured"),
    }
}

/// Crops and targets for one step.
pub fn assemble_batch(
    cfg: &TrainConfig,
    data: &Dataset,
    step: u64,
) -> Result<(Vec<image::RgbImage>, Vec<TrainTarget>)> {
    let crop = cfg.data.crop_size;
    let mut images = Vec::with_capacity(cfg.data.batch_size);
    let mut targets = Vec::with_capacity(cfg.data.batch_size);
    for slot in 0..cfg.data.batch_size {
        let (index, crop_seed) = sample(cfg.seed, data.len(), cfg.data.batch_size, step, slot);
        let (image, anns) = data.get(index)?;
        let (image, anns) = sample_crop(&image, &anns, crop, crop_seed);
        targets.push(build_targets(&anns, crop, crop, OUTPUT_STRIDE, &TargetConfig::default())?);
        images.push(image);
    }
    Ok((images, targets))
}

/// Detects on every item of `data` and micro-averages the counts.
pub fn evaluate_model(model: &Detector, data: &Dataset, long_side: u32, nms: &NmsConfig) -> Result<EvalResult> {
    let mut counts = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let (image, gts) = data.get(i)?;
        let dets = detect_image(model, &image, long_side, nms, &ReferenceKernel)?;
        counts.push(evaluate(&dets, &gts, 0.5).counts);
    }
    Ok(aggregate(&counts))
}

pub fn train(cfg: &TrainConfig, opts: &TrainOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let data = load_training_set(cfg)?;
    let val = match (&cfg.data.val_images, &cfg.data.val_gts) {
        (Some(i), Some(g)) => Some(Dataset::from_dirs(i, g)?),
        _ => None,
    };

    let model = Detector::new(cfg.model.clone(), cfg.seed, &opts.device)?;
    if let Some(path) = &cfg.pretrained_backbone {
        Checkpoint::read(path)?.load_prefix(&model, "backbone.")?;
    }
    let mut optimizer = AdaGrad::default();
    optimizer.initial_accumulator = cfg.optimizer.initial_accumulator;
    let mut start = 0;
    if let Some(path) = &opts.resume {
        let ck = Checkpoint::read(path).with_context(|| format!("reading {}", path.display()))?;
        if ck.config != cfg.model {
            bail!("checkpoint {} was trained with a different model config", path.display());
        }
        ck.load_into(&model)?;
        optimizer.set_state(ck.optimizer_state(&opts.device)?);
        start = ck.step;
    }

    let out = &cfg.run.output_dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let log_path = out.join(LOG_FILE);
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(opts.resume.is_some())
        .truncate(opts.resume.is_none())
        .open(&log_path)?;

    let mut manifest = RunManifest {
        config: cfg.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        start_step: start,
        final_step: start,
        log: log_path.clone(),
        checkpoints: Vec::new(),
        validations: Vec::new(),
        stopped_early: false,
        records: Vec::new(),
    };
    let (mut best, mut waited) = (f64::NEG_INFINITY, 0u32);

    for step in start..cfg.run.max_steps {
        let lr = lr_schedule(step, &cfg.optimizer);
        let (images, targets) = assemble_batch(cfg, &data, step)?;
        let x = batch_tensor(&images, &opts.device)?;
        let report = train_step(&model, &mut optimizer, &x, &targets, &cfg.loss, lr)?;
        if !report.total.is_finite() {
            bail!("loss diverged at step {step}: {report:?}");
        }
        let record = StepRecord::new(step, &report, lr);
        writeln!(log, "{}", serde_json::to_string(&record)?)?;
        manifest.records.push(record);
        let done = step + 1;
        manifest.final_step = done;
        if opts.progress_every > 0 && (step % opts.progress_every == 0 || done == cfg.run.max_steps) {
            eprintln!(
                "step {step:>7}  loss {:.4}  score {:.4}  iou {:.4}  angle {:.4}  lr {lr:.1e}",
                report.total, report.score_loss, report.iou_term, report.angle_term
            );
        }

        if cfg.run.checkpoint_every > 0 && done % cfg.run.checkpoint_every == 0 {
            let path = out.join(format!("ckpt_{done:08}.safetensors"));
            checkpoint::save(&path, &model, Some(&optimizer), done)?;
            manifest.checkpoints.push(CheckpointEntry { step: done, path });
        }

        if let Some(val) = &val {
            if cfg.run.eval_every > 0 && done % cfg.run.eval_every == 0 {
                let f = evaluate_model(&model, val, cfg.data.eval_long_side, &cfg.detection)?.fscore;
                manifest.validations.push(Validation { step: done, fscore: f });
                if f > best {
                    best = f;
                    waited = 0;
                    checkpoint::save(&out.join(BEST_CHECKPOINT), &model, Some(&optimizer), done)?;
                } else {
                    waited += 1;
                    if waited >= cfg.run.patience {
                        manifest.stopped_early = true;
                        break;
                    }
                }
            }
        }
    }

    let last = out.join(LAST_CHECKPOINT);
    checkpoint::save(&last, &model, Some(&optimizer), manifest.final_step)?;
    manifest.checkpoints.push(CheckpointEntry { step: manifest.final_step, path: last });
    std::fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads a training log back.
pub fn read_log(path: &Path) -> Result<Vec<StepRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).with_context(|| format!("bad log line {l:?}")))
        .collect()
}
