use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use vitforge::model::VIT_BASE_16_224;
use vitforge::{TrainConfig, ViTConfig};

use crate::UsageError;

pub const DEFAULT_SPLIT_RATIO: f64 = 0.85;

/// Keys accepted in a JSON run config. Every field is optional; command-line
/// flags override the file and defaults fill the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Architecture preset the other geometry keys start from.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heads: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mlp_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_ratio: Option<f64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        RunConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Loads `path` if given and lets every field set in `flags` win.
    pub fn load(path: Option<&Path>, flags: &RunConfig) -> Result<Self> {
        let base = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        Ok(base.overlaid(flags))
    }

    pub fn overlaid(self, top: &RunConfig) -> Self {
        let top = top.clone();
        let base = self;
        overlay!(
            base, top, preset, image_size, patch_size, dim, depth, heads, mlp_dim, num_classes, lr, epochs,
            batch_size, patience, seed, split_ratio
        )
    }

    /// Architecture for `data_classes` classes (used when `num_classes` is unset).
    pub fn model_config(&self, data_classes: Option<usize>) -> Result<ViTConfig> {
        let num_classes = match (self.num_classes, data_classes) {
            (Some(n), Some(d)) if n != d => {
                return Err(UsageError(format!("config says {n} classes but the data has {d}")).into())
            }
            (Some(n), _) | (None, Some(n)) => n,
            (None, None) => return Err(UsageError("num_classes is required".into()).into()),
        };
        let preset = self.preset.as_deref().unwrap_or(VIT_BASE_16_224);
        let base = ViTConfig::preset(preset, num_classes)
            .ok_or_else(|| UsageError(format!("unknown preset '{preset}'")))?;
        let cfg = ViTConfig {
            image_size: self.image_size.unwrap_or(base.image_size),
            patch_size: self.patch_size.unwrap_or(base.patch_size),
            dim: self.dim.unwrap_or(base.dim),
            heads: self.heads.unwrap_or(base.heads),
            depth: self.depth.unwrap_or(base.depth),
            mlp_dim: self.mlp_dim.unwrap_or(base.mlp_dim),
            num_classes,
            channels: base.channels,
        };
        cfg.validate().context("invalid model configuration")?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            patience: self.patience.unwrap_or(d.patience),
            seed: self.seed.unwrap_or(d.seed),
            ..d
        };
        cfg.validate().context("invalid training configuration")?;
        Ok(cfg)
    }

    pub fn split_ratio(&self) -> Result<f64> {
        let r = self.split_ratio.unwrap_or(DEFAULT_SPLIT_RATIO);
        check_ratio(r)?;
        Ok(r)
    }
}

pub fn check_ratio(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(UsageError(format!("split ratio {r} must lie strictly between 0 and 1")).into())
    }
}
