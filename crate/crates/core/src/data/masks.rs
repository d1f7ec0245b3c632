use serde::{Deserialize, Serialize};

use super::MaskSequence;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// `count` axis-aligned squares with uniformly drawn sides in
/// `min_side..=max_side` and uniformly drawn positions, identical in every
/// frame. Squares may overlap.
pub fn gen_stationary_square_masks(
    rng: &mut SeededRng,
    t: usize,
    h: usize,
    w: usize,
    count: usize,
    min_side: usize,
    max_side: usize,
) -> Result<MaskSequence> {
    if t == 0 || h == 0 || w == 0 {
        return Err(Error::config(format!("empty mask geometry {t}×{h}×{w}")));
    }
    if min_side == 0 || min_side > max_side || max_side > h.min(w) {
        return Err(Error::config(format!(
            "square sides {min_side}..={max_side} impossible in a {h}×{w} frame"
        )));
    }
    let mut plane = vec![0.0f32; h * w];
    for _ in 0..count {
        let side = rng.range_inclusive(min_side, max_side);
        let y0 = rng.below(h - side + 1);
        let x0 = rng.below(w - side + 1);
        for row in plane[y0 * w..(y0 + side) * w].chunks_exact_mut(w) {
            row[x0..x0 + side].iter_mut().for_each(|v| *v = 1.0);
        }
    }
    let data = plane.iter().copied().cycle().take(t * h * w).collect();
    MaskSequence::new(Tensor::from_vec(&[t, 1, h, w], data)?)
}

/// Distribution of training masks. Sides are fractions of `min(h, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub min_count: usize,
    pub max_count: usize,
    pub min_side_frac: f64,
    pub max_side_frac: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            min_count: 1,
            max_count: 4,
            min_side_frac: 1.0 / 8.0,
            max_side_frac: 1.0 / 3.0,
        }
    }
}

impl MaskConfig {
    pub fn side_range(&self, h: usize, w: usize) -> (usize, usize) {
        let extent = h.min(w) as f64;
        let lo = ((self.min_side_frac * extent).round() as usize).max(1);
        let hi = ((self.max_side_frac * extent).round() as usize).max(lo);
        (lo, hi)
    }

    pub fn sample(&self, rng: &mut SeededRng, t: usize, h: usize, w: usize) -> Result<MaskSequence> {
        if self.min_count > self.max_count {
            return Err(Error::config(format!(
                "mask count range {}..={} is empty",
                self.min_count, self.max_count
            )));
        }
        let count = rng.range_inclusive(self.min_count, self.max_count);
        let (lo, hi) = self.side_range(h, w);
        gen_stationary_square_masks(rng, t, h, w, count, lo, hi)
    }
}
