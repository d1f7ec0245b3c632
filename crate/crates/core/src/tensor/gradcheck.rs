//! Central finite-difference verification of analytic gradients.
//!
//! The numerical side only ever evaluates forward passes on perturbed
//! constant copies of the parameters, so it shares no code with `backward`.

use super::Tensor;
use crate::error::{Error, Result};

/// Sign fingerprints of the inputs to piecewise-linear ops (relu, leaky
/// relu, abs). Two evaluations with different fingerprints straddle a kink,
/// where a central difference does not estimate the derivative.
pub(crate) mod kinks {
    use std::cell::Cell;

    use crate::tensor::Element;

    thread_local! {
        static ACTIVE: Cell<bool> = const { Cell::new(false) };
        static PRINT: Cell<u64> = const { Cell::new(0) };
    }

    pub(crate) fn observe<T: Element>(xs: &[T]) {
        if !ACTIVE.with(Cell::get) {
            return;
        }
        PRINT.with(|p| {
            let mut h = p.get();
            for &x in xs {
                let sign = if x > T::zero() { 1 } else if x < T::zero() { 2 } else { 3 };
                h = (h ^ sign).wrapping_mul(0x0000_0100_0000_01b3);
            }
            p.set(h ^ 0xff);
        });
    }

    /// Runs `f` and returns the fingerprint of every kinked op it evaluated.
    pub(crate) fn fingerprint<R>(f: impl FnOnce() -> R) -> (R, u64) {
        let was = ACTIVE.with(|a| a.replace(true));
        let before = PRINT.with(|p| p.replace(0xcbf2_9ce4_8422_2325));
        let out = f();
        let print = PRINT.with(|p| p.replace(before));
        ACTIVE.with(|a| a.set(was));
        (out, print)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Denominator floor for the relative error, so gradients that are
    /// numerically zero are compared in absolute terms.
    pub floor: f64,
    /// Check at most this many coordinates per tensor (evenly strided).
    pub max_per_tensor: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            floor: 1e-3,
            max_per_tensor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Entries whose ±eps stencil crossed a relu/leaky-relu/abs kink; not compared.
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
    pub worst: Option<Mismatch>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        if other.worst.is_some() && (self.worst.is_none() || other.max_rel_err > self.max_rel_err) {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn sample_indices(len: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(k) if k < len => (0..k).map(|i| i * len / k + (len / k) / 2).collect(),
        _ => (0..len).collect(),
    }
}

/// Compares `backward` against central differences of `f` for every
/// (sampled) coordinate of every named input.
pub fn check_gradients<F>(
    inputs: &[(String, Tensor<f64>)],
    f: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.with_requires_grad(true)).collect();
    let loss = f(&leaves)?;
    loss.backward()?;

    let mut consts: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.detach()).collect();
    let (base_value, base_print) = kinks::fingerprint(|| f(&consts));
    base_value?;
    let mut report = GradCheckReport::default();
    for (ti, (name, base)) in inputs.iter().enumerate() {
        let analytic = leaves[ti]
            .grad()
            .unwrap_or_else(|| vec![0.0; base.numel()]);
        for idx in sample_indices(base.numel(), opts.max_per_tensor) {
            let mut eval = |delta: f64| -> Result<(f64, u64)> {
                let mut data = base.to_vec();
                data[idx] += delta;
                consts[ti] = Tensor::from_vec(base.shape(), data)?;
                let (value, print) = kinks::fingerprint(|| f(&consts));
                let value = value?.item()?;
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!("loss while perturbing {name}[{idx}]")));
                }
                Ok((value, print))
            };
            let (plus, plus_print) = eval(opts.eps)?;
            let (minus, minus_print) = eval(-opts.eps)?;
            consts[ti] = base.detach();
            if plus_print != base_print || minus_print != base_print {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let rel = relative_error(analytic[idx], numeric, opts.floor);
            report.checked += 1;
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(rel);
                report.worst = Some(Mismatch {
                    tensor: name.clone(),
                    index: idx,
                    analytic: analytic[idx],
                    numeric,
                    rel_err: rel,
                });
            }
        }
    }
    Ok(report)
}
