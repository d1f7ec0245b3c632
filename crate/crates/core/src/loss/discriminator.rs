//! Spatio-temporal patch discriminator: three 3-D convolutions, kernel
//! (3,5,5), stride (1,2,2), padding (1,2,2), leaky ReLU 0.2 between layers,
//! raw logits out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::rng::SeededRng;
use crate::tensor::{Conv3dSpec, Element, Tensor};

const KERNEL: [usize; 3] = [3, 5, 5];
const SPEC: Conv3dSpec = Conv3dSpec {
    stride: [1, 2, 2],
    padding: [1, 2, 2],
};
const SLOPE: f64 = 0.2;
/// Temporal kernel extent; shorter clips give the patches no temporal context.
pub const MIN_FRAMES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    /// Widths of the two hidden layers.
    pub hidden: [usize; 2],
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { hidden: [32, 64] }
    }
}

impl DiscriminatorConfig {
    fn channels(&self) -> [usize; 4] {
        [3, self.hidden[0], self.hidden[1], 1]
    }
}

pub fn init_discriminator<T: Element>(cfg: &DiscriminatorConfig, rng: &mut SeededRng) -> Result<ParamStore<T>> {
    if cfg.hidden.contains(&0) {
        return Err(Error::config("discriminator widths must be positive"));
    }
    let ch = cfg.channels();
    let mut store = ParamStore::new();
    for layer in 0..3 {
        let (cin, cout) = (ch[layer], ch[layer + 1]);
        let fan_in = cin * KERNEL.iter().product::<usize>();
        let bound = (6.0 / fan_in as f64).sqrt();
        let data = (0..cout * fan_in).map(|_| T::lit(rng.uniform(-bound, bound))).collect();
        let shape = [cout, cin, KERNEL[0], KERNEL[1], KERNEL[2]];
        store.insert(format!("disc.{layer}.weight"), Tensor::from_vec(&shape, data)?);
        store.insert(format!("disc.{layer}.bias"), Tensor::zeros(&[cout]));
    }
    Ok(store)
}

/// Patch logits `t×1×h/8×w/8` for a clip `t×3×h×w`.
pub fn discriminator_forward<T: Element>(clip: &Tensor<T>, params: &ParamStore<T>) -> Result<Tensor<T>> {
    let &[t, 3, h, w] = clip.shape() else {
        return Err(Error::shape(format!("discriminator input must be t×3×h×w, got {:?}", clip.shape())));
    };
    if t < MIN_FRAMES {
        return Err(Error::config(format!(
            "discriminator needs at least {MIN_FRAMES} frames, got {t}"
        )));
    }
    let mut x = clip.permute(&[1, 0, 2, 3])?.reshape(&[1, 3, t, h, w])?;
    for layer in 0..3 {
        x = x.conv3d(
            params.get(&format!("disc.{layer}.weight"))?,
            Some(params.get(&format!("disc.{layer}.bias"))?),
            SPEC,
        )?;
        if layer < 2 {
            x = x.leaky_relu(SLOPE);
        }
    }
    let s = x.shape().to_vec();
    x.reshape(&[s[1], s[2], s[3], s[4]])?.permute(&[1, 0, 2, 3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_logit_shape() {
        let mut rng = SeededRng::new(1);
        let params = init_discriminator::<f32>(&DiscriminatorConfig { hidden: [4, 4] }, &mut rng).unwrap();
        let clip = Tensor::<f32>::zeros(&[5, 3, 48, 48]);
        let logits = discriminator_forward(&clip, &params).unwrap();
        assert_eq!(logits.shape(), &[5, 1, 6, 6]);
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let mut rng = SeededRng::new(1);
        let params = init_discriminator::<f64>(&DiscriminatorConfig::default(), &mut rng).unwrap();
        let mut zeroed = ParamStore::new();
        for (name, t) in params.iter() {
            zeroed.insert(name, Tensor::zeros(t.shape()));
        }
        let clip = Tensor::<f64>::full(&[2, 3, 16, 16], 0.7);
        let logits = discriminator_forward(&clip, &zeroed).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_frame_is_rejected() {
        let mut rng = SeededRng::new(1);
        let params = init_discriminator::<f32>(&DiscriminatorConfig { hidden: [2, 2] }, &mut rng).unwrap();
        let clip = Tensor::<f32>::zeros(&[1, 3, 16, 16]);
        assert!(matches!(discriminator_forward(&clip, &params), Err(Error::Config(_))));
    }
}
