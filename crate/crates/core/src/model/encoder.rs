//! Hierarchical convolutional encoder.
//!
//! Stem: four 3×3 convolutions with strides 2,1,2,1 take the 4-channel
//! (RGB + mask) frame to the first-level feature `F1` at `h/4×w/4×c`.
//! Each hierarchy layer `j = 1..=L` computes
//! `F̂ = ReLU(GroupedConv3×3(F_j, groups = 2^(j-1)))` with `c` outputs and
//! concatenates `F1` back on, so every layer after the first sees `2c`
//! channels. A 7×7 stride-3 convolution embeds the result into tokens of
//! width `d = 2c` at `h/12×w/12`.

use super::params::{init_conv, ParamStore};
use super::{ModelConfig, TokenGrid};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Conv2dSpec, Element, Tensor};

pub(crate) const INPUT_CHANNELS: usize = 4;
pub(crate) const STEM_STRIDES: [usize; 4] = [2, 1, 2, 1];
const STEM_SLOPE: f64 = 0.2;

pub(crate) fn init<T: Element>(cfg: &ModelConfig, store: &mut ParamStore<T>, rng: &mut SeededRng) {
    let c = cfg.base_channels;
    for i in 0..STEM_STRIDES.len() {
        let cin = if i == 0 { INPUT_CHANNELS } else { c };
        init_conv(store, rng, &format!("enc.stem.{i}"), (cin, c, 3, 1));
    }
    for j in 1..=cfg.hierarchy_layers {
        let cin = if j == 1 { c } else { 2 * c };
        let groups = ModelConfig::hierarchy_groups(j);
        init_conv(store, rng, &format!("enc.hier.{j}"), (cin, c, 3, groups));
    }
    let embed_in = if cfg.hierarchy_layers == 0 { c } else { 2 * c };
    init_conv(store, rng, "enc.embed", (embed_in, cfg.token_dim, 7, 1));
}

fn conv<T: Element>(x: &Tensor<T>, params: &ParamStore<T>, prefix: &str, spec: Conv2dSpec) -> Result<Tensor<T>> {
    x.conv2d(
        params.get(&format!("{prefix}.weight"))?,
        Some(params.get(&format!("{prefix}.bias"))?),
        spec,
    )
}

/// Stem output `F1`, shape `t×c×h/4×w/4`.
pub fn stem<T: Element>(frames_with_mask: &Tensor<T>, params: &ParamStore<T>) -> Result<Tensor<T>> {
    let mut x = frames_with_mask.clone();
    for (i, &stride) in STEM_STRIDES.iter().enumerate() {
        x = conv(&x, params, &format!("enc.stem.{i}"), Conv2dSpec::new(stride, 1))?.leaky_relu(STEM_SLOPE);
    }
    Ok(x)
}

/// Runs the `L` hierarchy layers on `F1`; returns `F_{L+1}` (`t×2c×…`) or
/// `F1` itself when `L = 0`.
pub fn hierarchy<T: Element>(first: &Tensor<T>, cfg: &ModelConfig, params: &ParamStore<T>) -> Result<Tensor<T>> {
    let mut feat = first.clone();
    for j in 1..=cfg.hierarchy_layers {
        let spec = Conv2dSpec::new(1, 1).groups(ModelConfig::hierarchy_groups(j));
        let refined = conv(&feat, params, &format!("enc.hier.{j}"), spec)?.relu();
        feat = Tensor::concat(&[refined, first.clone()], 1)?;
    }
    Ok(feat)
}

/// `t×4×h×w` (corrupted RGB + mask) to a `t×h/12×w/12×d` token grid.
pub fn hierarchical_encode<T: Element>(
    frames_with_mask: &Tensor<T>,
    cfg: &ModelConfig,
    params: &ParamStore<T>,
) -> Result<TokenGrid<T>> {
    cfg.validate()?;
    let &[_, ch, h, w] = frames_with_mask.shape() else {
        return Err(Error::shape(format!(
            "encoder input must be t×4×h×w, got {:?}",
            frames_with_mask.shape()
        )));
    };
    if ch != INPUT_CHANNELS || h != cfg.frame_h || w != cfg.frame_w {
        return Err(Error::config(format!(
            "encoder expects t×{INPUT_CHANNELS}×{}×{}, got {:?}",
            cfg.frame_h,
            cfg.frame_w,
            frames_with_mask.shape()
        )));
    }
    let first = stem(frames_with_mask, params)?;
    let feat = hierarchy(&first, cfg, params)?;
    let tokens = conv(&feat, params, "enc.embed", Conv2dSpec::new(3, 3))?;
    TokenGrid::new(tokens.permute(&[0, 2, 3, 1])?)
}
