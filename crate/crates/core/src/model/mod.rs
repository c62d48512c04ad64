//! Vision Transformer configuration, parameters and forward pass.

mod params;
mod vit;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use params::{manifest, param_names, LayerSet, ParamSet, ViTParams};
pub use vit::{
    encoder_layer, forward_graph, patchify, patchify_batch, predict, LossAndGradients, VisionTransformer,
};

/// Name of the ViT-Base/16 at 224×224 preset.
pub const VIT_BASE_16_224: &str = "vit-base-16-224";

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViTConfig {
    /// Square input side in pixels.
    pub image_size: usize,
    pub patch_size: usize,
    /// Embedding width.
    pub dim: usize,
    pub heads: usize,
    /// Number of encoder layers.
    pub depth: usize,
    pub mlp_dim: usize,
    pub num_classes: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
}

fn default_channels() -> usize {
    3
}

impl ViTConfig {
    pub fn vit_base_16_224(num_classes: usize) -> Self {
        Self {
            image_size: 224,
            patch_size: 16,
            dim: 768,
            heads: 12,
            depth: 12,
            mlp_dim: 3072,
            num_classes,
            channels: 3,
        }
    }

    /// Desk-scale geometry: 8×8 images, 4×4 patches, width 16.
    pub fn tiny(num_classes: usize) -> Self {
        Self {
            image_size: 8,
            patch_size: 4,
            dim: 16,
            heads: 2,
            depth: 2,
            mlp_dim: 32,
            num_classes,
            channels: 3,
        }
    }

    pub fn preset(name: &str, num_classes: usize) -> Option<Self> {
        match name {
            VIT_BASE_16_224 => Some(Self::vit_base_16_224(num_classes)),
            "tiny" => Some(Self::tiny(num_classes)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("dim", self.dim),
            ("heads", self.heads),
            ("depth", self.depth),
            ("mlp_dim", self.mlp_dim),
            ("num_classes", self.num_classes),
            ("channels", self.channels),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Flattened patch length `P²·Ch`.
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_preset_geometry() {
        let cfg = ViTConfig::vit_base_16_224(5);
        cfg.validate().unwrap();
        assert_eq!(cfg.num_patches(), 196);
        assert_eq!(cfg.patch_dim(), 768);
        assert_eq!(cfg.head_dim(), 64);
        assert_eq!(ViTConfig::preset(VIT_BASE_16_224, 5), Some(cfg));
    }

    #[test]
    fn validate_rejects_bad_geometry() {
        let mut cfg = ViTConfig::tiny(2);
        cfg.image_size = 9;
        assert!(cfg.validate().is_err());
        let mut cfg = ViTConfig::tiny(2);
        cfg.heads = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ViTConfig::tiny(2);
        cfg.depth = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_uses_flat_keys() {
        let json = serde_json::to_value(ViTConfig::tiny(3)).unwrap();
        for key in ["image_size", "patch_size", "dim", "depth", "heads", "mlp_dim", "num_classes"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}
