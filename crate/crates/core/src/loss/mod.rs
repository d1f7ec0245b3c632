//! Reconstruction and adversarial objectives.

mod discriminator;

pub use discriminator::{discriminator_forward, init_discriminator, DiscriminatorConfig, MIN_FRAMES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_hole: f64,
    pub lambda_valid: f64,
    pub lambda_adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_hole: 1.0,
            lambda_valid: 1.0,
            lambda_adv: 0.01,
        }
    }
}

/// Repeats a `t×1×h×w` mask (or its complement) over `channels`.
fn expand_mask<T: Element>(masks: &Tensor<T>, channels: usize, complement: bool) -> Result<Tensor<T>> {
    let &[t, 1, h, w] = masks.shape() else {
        return Err(Error::shape(format!("masks must be t×1×h×w, got {:?}", masks.shape())));
    };
    let plane = h * w;
    let mut data = Vec::with_capacity(t * channels * plane);
    for frame in masks.data().chunks_exact(plane) {
        for _ in 0..channels {
            data.extend(frame.iter().map(|&m| if complement { T::one() - m } else { m }));
        }
    }
    Tensor::from_vec(&[t, channels, h, w], data)
}

fn masked_l1<T: Element>(pred: &Tensor<T>, target: &Tensor<T>, masks: &Tensor<T>, complement: bool) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() || pred.rank() != 4 {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} must match as t×c×h×w",
            pred.shape(),
            target.shape()
        )));
    }
    let region = expand_mask(masks, pred.shape()[1], complement)?;
    if region.shape() != pred.shape() {
        return Err(Error::shape(format!(
            "masks {:?} do not align with frames {:?}",
            masks.shape(),
            pred.shape()
        )));
    }
    let mass: T = region.data().iter().copied().sum();
    if mass == T::zero() {
        return Ok(Tensor::scalar(T::zero()));
    }
    let diff = pred.sub(target)?.mul(&region)?;
    Ok(diff.abs_sum().scale(1.0 / mass.to_f64().unwrap()))
}

/// `‖M ⊙ (Ŷ − Y)‖₁ / ‖M‖₁`, or 0 when the mask is empty.
pub fn loss_hole<T: Element>(pred: &Tensor<T>, target: &Tensor<T>, masks: &Tensor<T>) -> Result<Tensor<T>> {
    masked_l1(pred, target, masks, false)
}

/// `‖(1−M) ⊙ (Ŷ − Y)‖₁ / ‖1−M‖₁`, or 0 when everything is masked.
pub fn loss_valid<T: Element>(pred: &Tensor<T>, target: &Tensor<T>, masks: &Tensor<T>) -> Result<Tensor<T>> {
    masked_l1(pred, target, masks, true)
}

/// Descent form of the discriminator objective:
/// `−(E[log σ(real)] + E[log(1 − σ(fake))])`.
pub fn discriminator_loss<T: Element>(real_logits: &Tensor<T>, fake_logits: &Tensor<T>) -> Result<Tensor<T>> {
    if real_logits.shape() != fake_logits.shape() {
        return Err(Error::shape(format!(
            "real logits {:?} vs fake logits {:?}",
            real_logits.shape(),
            fake_logits.shape()
        )));
    }
    // log(1 − σ(x)) = log σ(−x)
    let real = real_logits.log_sigmoid().mean();
    let fake = fake_logits.neg().log_sigmoid().mean();
    Ok(real.add(&fake)?.neg())
}

/// Descent form of the generator's adversarial objective: `−E[log σ(fake)]`.
pub fn adversarial_loss<T: Element>(fake_logits: &Tensor<T>) -> Tensor<T> {
    fake_logits.log_sigmoid().mean().neg()
}

/// `(L_D, L_adv)`, both in descent form.
pub fn gan_losses<T: Element>(real_logits: &Tensor<T>, fake_logits: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((discriminator_loss(real_logits, fake_logits)?, adversarial_loss(fake_logits)))
}

/// `λ_hole·L_hole + λ_valid·L_valid + λ_adv·L_adv`.
pub fn total_generator_loss<T: Element>(
    hole: &Tensor<T>,
    valid: &Tensor<T>,
    adv: &Tensor<T>,
    weights: &LossWeights,
) -> Result<Tensor<T>> {
    hole.scale(weights.lambda_hole)
        .add(&valid.scale(weights.lambda_valid))?
        .add(&adv.scale(weights.lambda_adv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(shape: &[usize], v: f64) -> Tensor<f64> {
        Tensor::full(shape, v)
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::default();
        assert_eq!((w.lambda_hole, w.lambda_valid, w.lambda_adv), (1.0, 1.0, 0.01));
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let y = filled(&[2, 3, 4, 4], 0.3);
        let m = filled(&[2, 1, 4, 4], 1.0);
        assert_eq!(loss_hole(&y, &y, &m).unwrap().item().unwrap(), 0.0);
        let m = filled(&[2, 1, 4, 4], 0.0);
        assert_eq!(loss_valid(&y, &y, &m).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn empty_regions_give_zero() {
        let a = filled(&[1, 3, 2, 2], 0.0);
        let b = filled(&[1, 3, 2, 2], 1.0);
        let none = filled(&[1, 1, 2, 2], 0.0);
        let all = filled(&[1, 1, 2, 2], 1.0);
        assert_eq!(loss_hole(&a, &b, &none).unwrap().item().unwrap(), 0.0);
        assert_eq!(loss_valid(&a, &b, &all).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn full_mask_constant_error() {
        let pred = filled(&[1, 3, 4, 4], 0.5);
        let target = filled(&[1, 3, 4, 4], 0.0);
        let m = filled(&[1, 1, 4, 4], 1.0);
        assert!((loss_hole(&pred, &target, &m).unwrap().item().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_mask_constant_error_valid() {
        let pred = filled(&[1, 3, 4, 4], 0.3);
        let target = filled(&[1, 3, 4, 4], 0.0);
        let m = filled(&[1, 1, 4, 4], 0.0);
        assert!((loss_valid(&pred, &target, &m).unwrap().item().unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_logits() {
        let z = filled(&[2, 1, 3, 3], 0.0);
        let (d, adv) = gan_losses(&z, &z).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((d.item().unwrap() - 2.0 * ln2).abs() < 1e-12);
        assert!((adv.item().unwrap() - ln2).abs() < 1e-12);
    }

    #[test]
    fn confident_fake_drives_adversarial_loss_to_zero() {
        let fake = filled(&[4], 60.0);
        assert!(adversarial_loss(&fake).item().unwrap() < 1e-20);
    }

    #[test]
    fn weighted_sum() {
        let total = total_generator_loss(
            &Tensor::scalar(0.2f64),
            &Tensor::scalar(0.1),
            &Tensor::scalar(0.7),
            &LossWeights::default(),
        )
        .unwrap();
        assert!((total.item().unwrap() - 0.307).abs() < 1e-12);
    }
}
