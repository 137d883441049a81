//! Training configuration, stored as TOML.

use std::path::{Path, PathBuf};

use rfbtd_core::losses::LossWeights;
use rfbtd_core::postprocess::NmsConfig;
use rfbtd_model::ModelConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    /// Optional pretrained stem weights (tensors named `backbone.*`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained_backbone: Option<PathBuf>,
    pub optimizer: OptimizerConfig,
    pub loss: LossWeights,
    pub run: RunConfig,
    pub detection: NmsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory of `img_<N>.{jpg,png}` training images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_images: Option<PathBuf>,
    /// Directory of matching `gt_img_<N>.txt` files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_gts: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_gts: Option<PathBuf>,
    /// When nonzero, train on this many generated scenes instead of files.
    #[serde(default)]
    pub synthetic_scenes: usize,
    pub crop_size: u32,
    pub batch_size: usize,
    /// Long side inference and validation images are resized to.
    pub eval_long_side: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
    pub lr_floor: f64,
    pub initial_accumulator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub max_steps: u64,
    /// Steps between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    /// Steps between validation rounds; 0 disables validation.
    pub eval_every: u64,
    /// Validation rounds without improvement before stopping.
    pub patience: u32,
    pub output_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig {
                train_images: Some("data/icdar2015/train_images".into()),
                train_gts: Some("data/icdar2015/train_gts".into()),
                val_images: None,
                val_gts: None,
                synthetic_scenes: 0,
                crop_size: 512,
                batch_size: 16,
                eval_long_side: 1280,
            },
            model: ModelConfig::default(),
            pretrained_backbone: None,
            optimizer: OptimizerConfig {
                initial_lr: 1e-3,
                decay_factor: 0.1,
                decay_every: 27_300,
                lr_floor: 1e-5,
                initial_accumulator: 0.1,
            },
            loss: LossWeights::default(),
            run: RunConfig {
                max_steps: 200_000,
                checkpoint_every: 1_000,
                eval_every: 1_000,
                patience: 5,
                output_dir: "runs/default".into(),
            },
            detection: NmsConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Five generated 128² scenes, tiny network, high learning rate: a
    /// configuration that should memorise its data within a few hundred
    /// steps on a CPU.
    pub fn overfit_smoke() -> Self {
        let base = Self::default();
        Self {
            data: DataConfig {
                train_images: None,
                train_gts: None,
                val_images: None,
                val_gts: None,
                synthetic_scenes: 5,
                crop_size: 128,
                batch_size: 5,
                eval_long_side: 0,
            },
            model: ModelConfig::tiny(),
            optimizer: OptimizerConfig { initial_lr: 3e-2, ..base.optimizer },
            run: RunConfig {
                max_steps: 500,
                checkpoint_every: 0,
                eval_every: 0,
                patience: 5,
                output_dir: "runs/overfit".into(),
            },
            ..base
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let cfg = Self::from_toml(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let d = &self.data;
        if d.crop_size == 0 || !d.crop_size.is_multiple_of(32) {
            return bad("data.crop_size must be a positive multiple of 32");
        }
        if d.batch_size == 0 {
            return bad("data.batch_size must be positive");
        }
        if d.synthetic_scenes == 0 && (d.train_images.is_none() || d.train_gts.is_none()) {
            return bad("set data.train_images and data.train_gts, or data.synthetic_scenes");
        }
        if d.val_images.is_some() != d.val_gts.is_some() {
            return bad("data.val_images and data.val_gts go together");
        }
        let o = &self.optimizer;
        if !(o.initial_lr > 0.0 && o.lr_floor > 0.0 && o.lr_floor <= o.initial_lr) {
            return bad("need 0 < optimizer.lr_floor <= optimizer.initial_lr");
        }
        if !(o.decay_factor > 0.0 && o.decay_factor <= 1.0) || o.decay_every == 0 {
            return bad("need 0 < optimizer.decay_factor <= 1 and optimizer.decay_every > 0");
        }
        if self.run.max_steps == 0 {
            return bad("run.max_steps must be positive");
        }
        if self.model.distance_scale <= 0.0 {
            return bad("model.distance_scale must be positive");
        }
        Ok(())
    }
}

/// `max(initial · factor^floor(step / decay_every), floor)`.
pub fn lr_schedule(step: u64, cfg: &OptimizerConfig) -> f64 {
    let decays = (step / cfg.decay_every).min(i32::MAX as u64) as i32;
    (cfg.initial_lr * cfg.decay_factor.powi(decays)).max(cfg.lr_floor)
}
