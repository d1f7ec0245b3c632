//! Image-quality metrics on `[-1, 1]` images, and the attention complexity
//! benchmark.

pub mod bench;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Dynamic range of `[-1, 1]` images.
pub const PEAK: f64 = 2.0;
pub const SSIM_WINDOW: usize = 8;
const C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

fn same_shape<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("images {:?} and {:?} differ in shape", a.shape(), b.shape())));
    }
    Ok(())
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// `10·log10(4 / MSE)` in dB; `+∞` for identical images.
pub fn psnr<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_shape(a, b)?;
    if a.numel() == 0 {
        return Err(Error::contract("psnr of empty images"));
    }
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x.to_f64().unwrap() - y.to_f64().unwrap()).powi(2))
        .sum();
    Ok(psnr_from_mse(sse / a.numel() as f64, PEAK))
}

/// PSNR after mapping both images to bytes, with peak 255.
pub fn psnr_u8<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_shape(a, b)?;
    if a.numel() == 0 {
        return Err(Error::contract("psnr of empty images"));
    }
    let byte = |v: T| crate::data::unit_to_byte(v.to_f32().unwrap()) as f64;
    let sse: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| (byte(x) - byte(y)).powi(2)).sum();
    Ok(psnr_from_mse(sse / a.numel() as f64, 255.0))
}

/// PSNR restricted to hole pixels of `t×c×h×w` frames under `t×1×h×w` masks.
pub fn masked_psnr<T: Element>(pred: &Tensor<T>, target: &Tensor<T>, masks: &Tensor<T>) -> Result<f64> {
    same_shape(pred, target)?;
    let (&[t, c, h, w], &[mt, 1, mh, mw]) = (pred.shape(), masks.shape()) else {
        return Err(Error::shape(format!(
            "expected t×c×h×w frames and t×1×h×w masks, got {:?} and {:?}",
            pred.shape(),
            masks.shape()
        )));
    };
    if (t, h, w) != (mt, mh, mw) {
        return Err(Error::shape(format!("masks {:?} do not align with {:?}", masks.shape(), pred.shape())));
    }
    let plane = h * w;
    let (mut sse, mut count) = (0.0, 0usize);
    for (i, (p, y)) in pred.data().chunks_exact(plane).zip(target.data().chunks_exact(plane)).enumerate() {
        let m = &masks.data()[(i / c) * plane..(i / c + 1) * plane];
        for ((&pv, &yv), &mv) in p.iter().zip(y).zip(m) {
            if mv != T::zero() {
                sse += (pv.to_f64().unwrap() - yv.to_f64().unwrap()).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::contract("masked psnr over an empty hole region"));
    }
    Ok(psnr_from_mse(sse / count as f64, PEAK))
}

/// Mean SSIM over every 8×8 window (stride 1) of every plane; planes are the
/// trailing two axes, all leading axes are flattened.
pub fn ssim<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_shape(a, b)?;
    let shape = a.shape();
    if shape.len() < 2 {
        return Err(Error::contract(format!("ssim needs at least 2-D images, got {shape:?}")));
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::contract(format!(
            "{h}×{w} image is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window"
        )));
    }
    let planes = a.numel() / (h * w);
    if planes == 0 {
        return Err(Error::contract("ssim of empty images"));
    }
    let to64 = |t: &Tensor<T>| t.data().iter().map(|v| v.to_f64().unwrap()).collect::<Vec<f64>>();
    let (x, y) = (to64(a), to64(b));
    let mut total = 0.0;
    let mut windows = 0usize;
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    for p in 0..planes {
        let (xp, yp) = (&x[p * h * w..(p + 1) * h * w], &y[p * h * w..(p + 1) * h * w]);
        for r in 0..=h - SSIM_WINDOW {
            for c in 0..=w - SSIM_WINDOW {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in r..r + SSIM_WINDOW {
                    for j in c..c + SSIM_WINDOW {
                        let (u, v) = (xp[i * w + j], yp[i * w + j]);
                        sx += u;
                        sy += v;
                        sxx += u * u;
                        syy += v * v;
                        sxy += u * v;
                    }
                }
                let (mx, my) = (sx / n, sy / n);
                let vx = sxx / n - mx * mx;
                let vy = syy / n - my * my;
                let cov = sxy / n - mx * my;
                total += ((2.0 * mx * my + C1) * (2.0 * cov + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
                windows += 1;
            }
        }
    }
    Ok(total / windows as f64)
}
