//! The inpainting generator: hierarchical encoder, stacked decoupled
//! spatial/temporal Transformer blocks, frame-wise decoder.

pub mod blocks;
mod config;
pub mod decoder;
pub mod encoder;
mod params;

pub use blocks::{attention, run_blocks, spatial_block, temporal_block, BlockParams};
pub use config::{BlockKind, ModelConfig};
pub use decoder::decode;
pub use encoder::hierarchical_encode;
pub use params::ParamStore;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Element, Tensor};

/// Token field `t × H_tok × W_tok × d`.
#[derive(Debug, Clone)]
pub struct TokenGrid<T: Element = f32> {
    tokens: Tensor<T>,
}

impl<T: Element> TokenGrid<T> {
    pub fn new(tokens: Tensor<T>) -> Result<Self> {
        if tokens.rank() != 4 {
            return Err(Error::shape(format!(
                "token grid must be t×H×W×d, got {:?}",
                tokens.shape()
            )));
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &Tensor<T> {
        &self.tokens
    }

    pub fn into_tokens(self) -> Tensor<T> {
        self.tokens
    }

    /// `(t, H_tok, W_tok, d)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.tokens.shape();
        (s[0], s[1], s[2], s[3])
    }

    fn zone_extent(&self, s: usize) -> Result<(usize, usize)> {
        let (_, h, w, _) = self.dims();
        if s == 0 || h % s != 0 || w % s != 0 {
            return Err(Error::config(format!(
                "token grid {h}×{w} cannot be split into {s}×{s} zones"
            )));
        }
        Ok((h / s, w / s))
    }

    /// Cuts every frame into `s×s` zones: result `t × s × s × n × d`, where
    /// zone `(j, k)` holds the contiguous `(H/s)×(W/s)` sub-block in
    /// row-major order.
    pub fn zone_split(&self, s: usize) -> Result<Tensor<T>> {
        let (t, _, _, d) = self.dims();
        let (hz, wz) = self.zone_extent(s)?;
        self.tokens
            .reshape(&[t, s, hz, s, wz, d])?
            .permute(&[0, 1, 3, 2, 4, 5])?
            .reshape(&[t, s, s, hz * wz, d])
    }

    /// Inverse of [`TokenGrid::zone_split`].
    pub fn zone_merge(zones: &Tensor<T>, zone_h: usize, zone_w: usize) -> Result<Self> {
        let &[t, s, s2, n, d] = zones.shape() else {
            return Err(Error::shape(format!("zones must be t×s×s×n×d, got {:?}", zones.shape())));
        };
        if s != s2 || n != zone_h * zone_w {
            return Err(Error::shape(format!(
                "zones {:?} do not match zone extent {zone_h}×{zone_w}",
                zones.shape()
            )));
        }
        Self::new(
            zones
                .reshape(&[t, s, s, zone_h, zone_w, d])?
                .permute(&[0, 1, 3, 2, 4, 5])?
                .reshape(&[t, s * zone_h, s * zone_w, d])?,
        )
    }

    /// Groups `P_jk` for the temporal block: `s² × (t·n) × d`.
    pub fn temporal_groups(&self, s: usize) -> Result<Tensor<T>> {
        let (t, _, _, d) = self.dims();
        let zones = self.zone_split(s)?;
        let n = zones.shape()[3];
        zones.permute(&[1, 2, 0, 3, 4])?.reshape(&[s * s, t * n, d])
    }

    pub fn from_temporal_groups(&self, groups: &Tensor<T>, s: usize) -> Result<Self> {
        let (t, _, _, d) = self.dims();
        let (hz, wz) = self.zone_extent(s)?;
        let zones = groups
            .reshape(&[s, s, t, hz * wz, d])?
            .permute(&[2, 0, 1, 3, 4])?;
        Self::zone_merge(&zones, hz, wz)
    }

    /// Groups `P^i` for the spatial block: `t × (s²·n) × d`, zone-major.
    pub fn spatial_groups(&self, s: usize) -> Result<Tensor<T>> {
        let (t, _, _, d) = self.dims();
        let zones = self.zone_split(s)?;
        let n = zones.shape()[3];
        zones.reshape(&[t, s * s * n, d])
    }

    pub fn from_spatial_groups(&self, groups: &Tensor<T>, s: usize) -> Result<Self> {
        let (t, _, _, d) = self.dims();
        let (hz, wz) = self.zone_extent(s)?;
        Self::zone_merge(&groups.reshape(&[t, s, s, hz * wz, d])?, hz, wz)
    }
}

/// Fresh generator parameters for `cfg`.
pub fn init_generator<T: Element>(cfg: &ModelConfig, rng: &mut SeededRng) -> Result<ParamStore<T>> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    encoder::init(cfg, &mut store, rng);
    blocks::init(cfg, &mut store, rng);
    decoder::init(cfg, &mut store, rng);
    Ok(store)
}

/// Zeroes the attention output and FFN output projections of every block,
/// which turns each block into the identity map.
pub fn zero_block_outputs<T: Element>(params: &mut ParamStore<T>) {
    params.zero_matching("blocks.", ".attn.out.weight");
    params.zero_matching("blocks.", ".attn.out.bias");
    params.zero_matching("blocks.", ".ffn.fc2.weight");
    params.zero_matching("blocks.", ".ffn.fc2.bias");
}

/// Channel-concatenates corrupted frames `t×3×h×w` with masks `t×1×h×w`.
pub fn encoder_input<T: Element>(frames: &Tensor<T>, masks: &Tensor<T>) -> Result<Tensor<T>> {
    let (fs, ms) = (frames.shape(), masks.shape());
    if fs.len() != 4 || ms.len() != 4 || fs[1] != 3 || ms[1] != 1 || fs[0] != ms[0] || fs[2..] != ms[2..] {
        return Err(Error::shape(format!(
            "frames {fs:?} and masks {ms:?} must be t×3×h×w and t×1×h×w"
        )));
    }
    Tensor::concat(&[frames.clone(), masks.clone()], 1)
}

/// `Ŷ = G(X, M)`: full-frame prediction `t×3×h×w` for corrupted frames and masks.
pub fn generator_forward<T: Element>(
    corrupted: &Tensor<T>,
    masks: &Tensor<T>,
    cfg: &ModelConfig,
    params: &ParamStore<T>,
) -> Result<Tensor<T>> {
    let input = encoder_input(corrupted, masks)?;
    let grid = hierarchical_encode(&input, cfg, params)?;
    let grid = run_blocks(&grid, cfg, params)?;
    decode(&grid, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t: usize, h: usize, w: usize, d: usize) -> TokenGrid<f32> {
        let data = (0..t * h * w * d).map(|v| v as f32).collect();
        TokenGrid::new(Tensor::from_vec(&[t, h, w, d], data).unwrap()).unwrap()
    }

    #[test]
    fn zone_split_partitions_evenly() {
        let g = grid(1, 4, 4, 1);
        let zones = g.zone_split(2).unwrap();
        assert_eq!(zones.shape(), &[1, 2, 2, 4, 1]);
        // zone (0,1) is the top-right 2×2 block
        assert_eq!(&zones.data()[4..8], &[2.0, 3.0, 6.0, 7.0]);
        // zone (1,0) is bottom-left
        assert_eq!(&zones.data()[8..12], &[8.0, 9.0, 12.0, 13.0]);
    }

    #[test]
    fn single_zone_is_whole_frame() {
        let g = grid(2, 4, 4, 3);
        let zones = g.zone_split(1).unwrap();
        assert_eq!(zones.shape(), &[2, 1, 1, 16, 3]);
        assert_eq!(zones.data(), g.tokens().data());
    }

    #[test]
    fn zone_split_rejects_indivisible_grid() {
        let g = grid(1, 4, 6, 1);
        assert!(matches!(g.zone_split(4), Err(Error::Config(_))));
    }

    #[test]
    fn temporal_groups_collect_one_zone_across_frames() {
        let g = grid(3, 4, 4, 1);
        let groups = g.temporal_groups(2).unwrap();
        assert_eq!(groups.shape(), &[4, 12, 1]);
        // group 0 = zone (0,0) of frames 0,1,2
        assert_eq!(&groups.data()[..4], &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(&groups.data()[4..8], &[16.0, 17.0, 20.0, 21.0]);
        let back = g.from_temporal_groups(&groups, 2).unwrap();
        assert_eq!(back.tokens().data(), g.tokens().data());
    }

    #[test]
    fn spatial_groups_roundtrip() {
        let g = grid(3, 4, 6, 2);
        let groups = g.spatial_groups(2).unwrap();
        assert_eq!(groups.shape(), &[3, 24, 2]);
        let back = g.from_spatial_groups(&groups, 2).unwrap();
        assert_eq!(back.tokens().data(), g.tokens().data());
    }

    #[test]
    fn encoder_input_checks_alignment() {
        let f = Tensor::<f32>::zeros(&[2, 3, 24, 24]);
        let m = Tensor::<f32>::zeros(&[3, 1, 24, 24]);
        assert!(encoder_input(&f, &m).is_err());
    }
}
