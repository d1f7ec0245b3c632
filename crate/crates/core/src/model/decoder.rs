//! Frame-wise CNN decoder, mirroring the encoder's downsampling schedule:
//! transposed 7×7 stride-3 conv (`h/12 → h/4`, `d → c`), two stages of
//! nearest 2× upsample + 3×3 conv + leaky ReLU, then a 3×3 conv to RGB and
//! `tanh`.

use super::params::{init_conv, uniform_fan_in, ParamStore};
use super::{ModelConfig, TokenGrid};
use crate::error::Result;
use crate::rng::SeededRng;
use crate::tensor::{Conv2dSpec, ConvTranspose2dSpec, Element, Tensor};

const SLOPE: f64 = 0.2;

pub(crate) const UP_SPEC: ConvTranspose2dSpec = ConvTranspose2dSpec {
    stride: 3,
    padding: 3,
    output_padding: 2,
};

pub(crate) fn init<T: Element>(cfg: &ModelConfig, store: &mut ParamStore<T>, rng: &mut SeededRng) {
    let (c, d) = (cfg.base_channels, cfg.token_dim);
    // Each output pixel of a stride-3 transposed 7×7 sees about d·(7/3)² taps.
    store.insert("dec.up.weight", uniform_fan_in(rng, &[d, c, 7, 7], d * 49 / 9, 2.0));
    store.insert("dec.up.bias", Tensor::zeros(&[c]));
    init_conv(store, rng, "dec.conv1", (c, c, 3, 1));
    init_conv(store, rng, "dec.conv2", (c, c, 3, 1));
    init_conv(store, rng, "dec.out", (c, 3, 3, 1));
}

fn conv3x3<T: Element>(x: &Tensor<T>, params: &ParamStore<T>, prefix: &str) -> Result<Tensor<T>> {
    x.conv2d(
        params.get(&format!("{prefix}.weight"))?,
        Some(params.get(&format!("{prefix}.bias"))?),
        Conv2dSpec::new(1, 1),
    )
}

/// Token grid `t×H_tok×W_tok×d` to frames `t×3×h×w` in `[-1, 1]`.
pub fn decode<T: Element>(grid: &TokenGrid<T>, params: &ParamStore<T>) -> Result<Tensor<T>> {
    let x = grid.tokens().permute(&[0, 3, 1, 2])?;
    let x = x
        .conv_transpose2d(params.get("dec.up.weight")?, Some(params.get("dec.up.bias")?), UP_SPEC)?
        .leaky_relu(SLOPE);
    let x = conv3x3(&x.upsample_nearest2d(2)?, params, "dec.conv1")?.leaky_relu(SLOPE);
    let x = conv3x3(&x.upsample_nearest2d(2)?, params, "dec.conv2")?.leaky_relu(SLOPE);
    Ok(conv3x3(&x, params, "dec.out")?.tanh())
}
