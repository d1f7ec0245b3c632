use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::Element;

/// Gradients by parameter name.
pub type Grads<T> = BTreeMap<String, Vec<T>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Step at which the learning rate drops once by `decay_factor`.
    pub decay_at: u64,
    pub decay_factor: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_at: 1_600,
            decay_factor: 0.1,
        }
    }
}

impl OptimConfig {
    /// Full-scale schedule: decay at 400k of 500k iterations.
    pub fn full_scale() -> Self {
        Self {
            decay_at: 400_000,
            ..Self::default()
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.decay_at {
            self.lr
        } else {
            self.lr * self.decay_factor
        }
    }
}

/// Step-decay schedule: `base` before `decay_at`, `base·0.1` from it on.
pub fn lr_schedule(step: u64, base: f64, decay_at: u64) -> f64 {
    OptimConfig {
        lr: base,
        decay_at,
        ..OptimConfig::default()
    }
    .lr_at(step)
}

/// Adam moments and step counter. Moments are kept in `f64` regardless of
/// parameter precision.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: OptimConfig,
    pub step: u64,
    pub first: BTreeMap<String, Vec<f64>>,
    pub second: BTreeMap<String, Vec<f64>>,
}

impl OptimState {
    pub fn new<T: Element>(config: OptimConfig, params: &ParamStore<T>) -> Self {
        let zeros = |p: &ParamStore<T>| {
            p.iter()
                .map(|(n, t)| (n.to_string(), vec![0.0; t.numel()]))
                .collect::<BTreeMap<_, _>>()
        };
        Self {
            config,
            step: 0,
            first: zeros(params),
            second: zeros(params),
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr_at(self.step)
    }
}

/// Reads the accumulated gradient of every tracked parameter.
pub fn collect_grads<T: Element>(tracked: &ParamStore<T>) -> Result<Grads<T>> {
    tracked
        .iter()
        .map(|(name, t)| {
            t.grad()
                .map(|g| (name.to_string(), g))
                .ok_or_else(|| Error::contract(format!("parameter {name:?} received no gradient")))
        })
        .collect()
}

/// One bias-corrected Adam update at learning rate `schedule(state.step)`.
pub fn adam_step<T: Element>(params: &mut ParamStore<T>, grads: &Grads<T>, state: &mut OptimState) -> Result<()> {
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        if !grads.contains_key(name) {
            return Err(Error::contract(format!("missing gradient for parameter {name:?}")));
        }
    }
    let OptimConfig { beta1, beta2, eps, .. } = state.config;
    let lr = state.lr();
    state.step += 1;
    let t = state.step as i32;
    let (bc1, bc2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
    for name in &names {
        let g = &grads[name];
        let current = params.get(name)?;
        if g.len() != current.numel() {
            return Err(Error::shape(format!(
                "gradient for {name:?} has {} values, parameter has {}",
                g.len(),
                current.numel()
            )));
        }
        let m = state.first.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
        let v = state.second.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
        let updated = current
            .data()
            .iter()
            .zip(g)
            .zip(m.iter_mut().zip(v.iter_mut()))
            .map(|((&p, &gi), (mi, vi))| {
                let gi = gi.to_f64().unwrap();
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let (m_hat, v_hat) = (*mi / bc1, *vi / bc2);
                T::lit(p.to_f64().unwrap() - lr * m_hat / (v_hat.sqrt() + eps))
            })
            .collect();
        params.set_data(name, updated)?;
    }
    Ok(())
}
