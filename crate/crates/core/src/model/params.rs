use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Element, Tensor};

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone)]
pub struct ParamStore<T: Element = f32> {
    entries: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self { entries: BTreeMap::new() }
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::contract(format!("missing parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fresh gradient-tracking leaves over the same values, for one step.
    pub fn tracked(&self) -> Self {
        self.map(|t| t.with_requires_grad(true))
    }

    /// Constant copies; gradients do not flow into them.
    pub fn frozen(&self) -> Self {
        self.map(Tensor::detach)
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    fn map(&self, f: impl Fn(&Tensor<T>) -> Tensor<T>) -> Self {
        Self {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), f(v))).collect(),
        }
    }

    /// Replaces a parameter's values, keeping its shape.
    pub fn set_data(&mut self, name: &str, data: Vec<T>) -> Result<()> {
        let shape = self.get(name)?.shape().to_vec();
        self.entries.insert(name.to_string(), Tensor::from_vec(&shape, data)?);
        Ok(())
    }

    /// Zeroes every parameter whose name starts with `prefix` and ends with `suffix`.
    pub fn zero_matching(&mut self, prefix: &str, suffix: &str) {
        for (name, t) in self.entries.iter_mut() {
            if name.starts_with(prefix) && name.ends_with(suffix) {
                *t = Tensor::zeros(t.shape());
            }
        }
    }

    /// Bit-level equality of names, shapes and values.
    pub fn bit_equal(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((ka, a), (kb, b))| {
                ka == kb
                    && a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_f64().unwrap().to_bits() == y.to_f64().unwrap().to_bits())
            })
    }
}

/// Uniform `±sqrt(gain·3/fan_in)` weights; variance `gain/fan_in`.
pub(crate) fn uniform_fan_in<T: Element>(rng: &mut SeededRng, shape: &[usize], fan_in: usize, gain: f64) -> Tensor<T> {
    let bound = (3.0 * gain / fan_in as f64).sqrt();
    let data = (0..shape.iter().product::<usize>())
        .map(|_| T::lit(rng.uniform(-bound, bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

/// Registers `{prefix}.weight` (`O×C/groups×k×k`) and a zero `{prefix}.bias`.
pub(crate) fn init_conv<T: Element>(
    store: &mut ParamStore<T>,
    rng: &mut SeededRng,
    prefix: &str,
    (cin, cout, k, groups): (usize, usize, usize, usize),
) {
    let fan_in = cin / groups * k * k;
    store.insert(format!("{prefix}.weight"), uniform_fan_in(rng, &[cout, cin / groups, k, k], fan_in, 2.0));
    store.insert(format!("{prefix}.bias"), Tensor::zeros(&[cout]));
}

/// Registers a linear layer `{prefix}.weight` (`in×out`) and `{prefix}.bias`.
pub(crate) fn init_linear<T: Element>(store: &mut ParamStore<T>, rng: &mut SeededRng, prefix: &str, fan_in: usize, fan_out: usize, gain: f64) {
    store.insert(format!("{prefix}.weight"), uniform_fan_in(rng, &[fan_in, fan_out], fan_in, gain));
    store.insert(format!("{prefix}.bias"), Tensor::zeros(&[fan_out]));
}
