//! Architecture hyper-parameters.

use serde::{Deserialize, Serialize};

/// Residual bottleneck stem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Channels of the 7×7 stem conv.
    pub stem_width: usize,
    /// Inner width of the first residual stage; doubles per stage.
    pub base_width: usize,
    /// Bottleneck blocks per residual stage.
    pub blocks: [usize; 4],
    /// Output channels = inner width × expansion.
    pub expansion: usize,
}

impl BackboneConfig {
    /// The 50-layer residual network.
    pub fn resnet50() -> Self {
        Self {
            stem_width: 64,
            base_width: 64,
            blocks: [3, 4, 6, 3],
            expansion: 4,
        }
    }

    /// Same topology at a fraction of the cost, for tests and smoke runs.
    pub fn tiny() -> Self {
        Self {
            stem_width: 8,
            base_width: 8,
            blocks: [1, 1, 1, 1],
            expansion: 2,
        }
    }

    /// Channels of stages f1..f5.
    pub fn stage_channels(&self) -> [usize; 5] {
        let w = |i: u32| self.base_width * 2usize.pow(i) * self.expansion;
        [self.stem_width, w(0), w(1), w(2), w(3)]
    }
}

/// Block used to refine the upsampled map in the f3 and f2 fusion stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    #[default]
    RfbS,
    /// 1×1 bottleneck followed by two 3×3 convs.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    /// Decoder widths after fusing f4, f3 and f2.
    pub decoder_widths: [usize; 3],
    pub refinement: Refinement,
    /// Apply a full RFB block to the fused map before the heads.
    pub final_rfb: bool,
    /// Distance outputs are `sigmoid * distance_scale` pixels.
    pub distance_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::resnet50(),
            decoder_widths: [128, 64, 32],
            refinement: Refinement::RfbS,
            final_rfb: true,
            distance_scale: 512.0,
        }
    }
}

impl ModelConfig {
    pub fn tiny() -> Self {
        Self {
            backbone: BackboneConfig::tiny(),
            decoder_widths: [32, 16, 16],
            ..Self::default()
        }
    }
}
