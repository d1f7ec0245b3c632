use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of a decoupled Transformer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Attends across frames within one zone.
    Temporal,
    /// Attends across all zones within one frame.
    Spatial,
}

impl BlockKind {
    pub fn from_char(c: char) -> Result<Self> {
        match c {
            't' => Ok(BlockKind::Temporal),
            's' => Ok(BlockKind::Spatial),
            other => Err(Error::config(format!(
                "stacking character {other:?} is not 't' or 's'"
            ))),
        }
    }
}

/// Generator architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Channel width `c` of the first-level feature map.
    pub base_channels: usize,
    /// Number of hierarchical grouped-conv layers `L` (0 embeds the stem output directly).
    pub hierarchy_layers: usize,
    /// Zones per side `s`; each frame's token grid is cut into `s²` zones.
    pub zone_split: usize,
    /// Token width `d`; the embedding emits `2c` channels so this must equal `2c`.
    pub token_dim: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    /// One character per block, applied left to right: `t` temporal, `s` spatial.
    pub stacking: String,
    pub frame_h: usize,
    pub frame_w: usize,
    /// Use `FFN(MSA(P)+P) + (MSA(P)+P)` instead of the literal `FFN(MSA(P)+P) + P`.
    pub residual_from_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_channels: 8,
            hierarchy_layers: 4,
            zone_split: 2,
            token_dim: 16,
            heads: 4,
            ffn_hidden: 64,
            stacking: "tstststs".into(),
            frame_h: 48,
            frame_w: 48,
            residual_from_attention: false,
        }
    }
}

impl ModelConfig {
    /// Channel-consistent config with `d = 2c`, FFN width `4d`.
    pub fn with_channels(mut self, c: usize) -> Self {
        self.base_channels = c;
        self.token_dim = 2 * c;
        self.ffn_hidden = 8 * c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.base_channels;
        let s = self.zone_split;
        if c == 0 || s == 0 || self.heads == 0 || self.ffn_hidden == 0 {
            return Err(Error::config(
                "base_channels, zone_split, heads and ffn_hidden must be positive",
            ));
        }
        if self.token_dim != 2 * c {
            return Err(Error::config(format!(
                "token_dim {} must equal 2·base_channels = {}",
                self.token_dim,
                2 * c
            )));
        }
        if !self.token_dim.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "token_dim {} not divisible by heads {}",
                self.token_dim, self.heads
            )));
        }
        if self.hierarchy_layers > 0 {
            let groups = 1usize
                .checked_shl(self.hierarchy_layers as u32 - 1)
                .filter(|g| *g <= c)
                .ok_or_else(|| {
                    Error::config(format!(
                        "hierarchy_layers {} needs 2^(L-1) groups but base_channels is {c}",
                        self.hierarchy_layers
                    ))
                })?;
            if !c.is_multiple_of(groups) {
                return Err(Error::config(format!(
                    "base_channels {c} not divisible by 2^(L-1) = {groups}"
                )));
            }
        }
        let unit = 12 * s;
        if self.frame_h == 0 || self.frame_w == 0 || !self.frame_h.is_multiple_of(unit) || !self.frame_w.is_multiple_of(unit) {
            return Err(Error::config(format!(
                "frame {}×{} must be a positive multiple of 12·s = {unit}",
                self.frame_h, self.frame_w
            )));
        }
        self.blocks()?;
        Ok(())
    }

    pub fn blocks(&self) -> Result<Vec<BlockKind>> {
        self.stacking.chars().map(BlockKind::from_char).collect()
    }

    /// Token grid extent per frame.
    pub fn token_hw(&self) -> (usize, usize) {
        (self.frame_h / 12, self.frame_w / 12)
    }

    /// Tokens per zone, `n = (H_tok/s)·(W_tok/s)`.
    pub fn tokens_per_zone(&self) -> usize {
        let (h, w) = self.token_hw();
        (h / self.zone_split) * (w / self.zone_split)
    }

    /// Groups used by the grouped convolution at hierarchy layer `j` (1-based).
    pub fn hierarchy_groups(layer: usize) -> usize {
        1 << (layer - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.token_hw(), (4, 4));
        assert_eq!(cfg.tokens_per_zone(), 4);
        assert_eq!(cfg.blocks().unwrap().len(), 8);
    }

    #[test]
    fn rejects_frame_not_multiple_of_12s() {
        let cfg = ModelConfig { frame_h: 36, ..ModelConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_group_indivisibility() {
        let cfg = ModelConfig { hierarchy_layers: 5, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig::default().with_channels(6);
        assert!(ModelConfig { hierarchy_layers: 3, heads: 4, ..cfg.clone() }.validate().is_err());
        assert!(ModelConfig { hierarchy_layers: 2, heads: 4, ..cfg }.validate().is_ok());
    }

    #[test]
    fn rejects_bad_stacking_character() {
        let cfg = ModelConfig { stacking: "tsx".into(), ..ModelConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_heads_not_dividing_d() {
        let cfg = ModelConfig { heads: 3, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_stacking_is_allowed() {
        let cfg = ModelConfig { stacking: String::new(), ..ModelConfig::default() };
        cfg.validate().unwrap();
        assert!(cfg.blocks().unwrap().is_empty());
    }
}
