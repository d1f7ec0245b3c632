//! Dense row-major tensors with tape-free reverse-mode differentiation.
//!
//! Every operation that touches a tensor with `requires_grad` records a
//! backward closure together with its inputs. `backward` walks the recorded
//! graph in reverse topological order and accumulates gradients into the
//! leaves. Data buffers are immutable once a tensor exists; only the gradient
//! accumulator of a leaf is ever written to.

mod conv;
pub mod counter;
mod element;
pub mod gradcheck;
mod linalg;
mod ops;

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

pub use conv::{Conv2dSpec, Conv3dSpec, ConvTranspose2dSpec};
pub use element::{DType, Element};
pub use linalg::gemm;

use crate::error::{Error, Result};

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Backward closure: receives the gradient of the op's output and returns one
/// optional gradient per input, in input order.
type BackwardFn<T> = Box<dyn Fn(&[T]) -> Vec<Option<Vec<T>>>>;

struct GradFn<T: Element> {
    inputs: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Node<T: Element> {
    id: u64,
    shape: Vec<usize>,
    data: Rc<Vec<T>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    grad_fn: Option<GradFn<T>>,
}

/// An n-dimensional array of `T` with optional gradient tracking.
///
/// Cloning is cheap and shares both the data and the graph node.
pub struct Tensor<T: Element = f32>(Rc<Node<T>>);

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<T> = self.0.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("dtype", &T::DTYPE)
            .field("requires_grad", &self.0.requires_grad)
            .field("data", &preview)
            .finish()
    }
}

/// Value equality: same shape and element-wise equal data. Graph state and
/// gradients are ignored.
impl<T: Element> PartialEq for Tensor<T> {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape() && self.data() == other.data()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    /// Builds a constant tensor. Fails if `data.len()` disagrees with `shape`
    /// or any extent is zero.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape(format!("zero extent in shape {shape:?}")));
        }
        if numel(shape) != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {} values, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self::leaf(shape.to_vec(), Rc::new(data), false))
    }

    /// Convenience constructor from `f64` values, converted to `T`.
    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::from_f64(v).unwrap()).collect())
    }

    pub fn scalar(value: T) -> Self {
        Self::leaf(Vec::new(), Rc::new(vec![value]), false)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::leaf(shape.to_vec(), Rc::new(vec![value; numel(shape)]), false)
    }

    fn leaf(shape: Vec<usize>, data: Rc<Vec<T>>, requires_grad: bool) -> Self {
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            grad_fn: None,
        }))
    }

    /// Returns a fresh leaf sharing this tensor's data, with gradient
    /// tracking switched on or off.
    pub fn with_requires_grad(&self, requires_grad: bool) -> Self {
        Self::leaf(self.0.shape.clone(), Rc::clone(&self.0.data), requires_grad)
    }

    /// Cuts the graph: same values, no history, no gradient tracking.
    pub fn detach(&self) -> Self {
        self.with_requires_grad(false)
    }

    /// Records the result of an op. The backward closure is kept only when at
    /// least one input tracks gradients.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        inputs: Vec<Tensor<T>>,
        backward: impl Fn(&[T]) -> Vec<Option<Vec<T>>> + 'static,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn {
            inputs,
            backward: Box::new(backward),
        });
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data: Rc::new(data),
            requires_grad,
            grad: RefCell::new(None),
            grad_fn,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.as_ref().clone()
    }

    pub(crate) fn data_rc(&self) -> Rc<Vec<T>> {
        Rc::clone(&self.0.data)
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "item() on tensor of shape {:?}",
                self.shape()
            )));
        }
        Ok(self.0.data[0])
    }

    /// Accumulated gradient of a leaf, if `backward` reached it.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn grad_tensor(&self) -> Option<Tensor<T>> {
        self.grad()
            .map(|g| Self::leaf(self.0.shape.clone(), Rc::new(g), false))
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Converts to another precision. The result is a constant leaf.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        let data = self
            .0
            .data
            .iter()
            .map(|v| U::from_f64(v.to_f64().unwrap()).unwrap())
            .collect();
        Tensor::leaf(self.0.shape.clone(), Rc::new(data), false)
    }

    /// Reverse-mode sweep from a scalar. Gradients accumulate into every
    /// reachable leaf with `requires_grad`; call [`Tensor::zero_grad`] between
    /// steps to reset them.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "backward() needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        let order = self.topo_order();
        let mut pending: HashMap<u64, Vec<T>> = HashMap::new();
        pending.insert(self.0.id, vec![T::one()]);

        for node in order.iter().rev() {
            let Some(grad_out) = pending.remove(&node.0.id) else {
                continue;
            };
            match &node.0.grad_fn {
                None => {
                    let mut slot = node.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&grad_out).for_each(|(a, g)| *a = *a + *g),
                        None => *slot = Some(grad_out),
                    }
                }
                Some(grad_fn) => {
                    let input_grads = (grad_fn.backward)(&grad_out);
                    debug_assert_eq!(input_grads.len(), grad_fn.inputs.len());
                    for (input, g) in grad_fn.inputs.iter().zip(input_grads) {
                        let Some(g) = g else { continue };
                        if !input.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.len(), input.numel());
                        match pending.get_mut(&input.0.id) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
                            None => {
                                pending.insert(input.0.id, g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Nodes reachable through gradient-tracking edges, inputs before users.
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.0.id) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(grad_fn) = &node.0.grad_fn {
                for input in &grad_fn.inputs {
                    if input.requires_grad() && !visited.contains(&input.0.id) {
                        stack.push((input.clone(), false));
                    }
                }
            }
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::from_vec(&[2, 0], vec![]).is_err());
        let t = Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.numel(), 6);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0])
            .unwrap()
            .with_requires_grad(true);
        let err = x.backward().unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn sum_of_squares_gradient() {
        let x = Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0])
            .unwrap()
            .with_requires_grad(true);
        let loss = x.mul(&x).unwrap().sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn mean_relu_gradient() {
        let x = Tensor::<f64>::from_vec(&[2], vec![-1.0, 3.0])
            .unwrap()
            .with_requires_grad(true);
        x.relu().mean().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0])
            .unwrap()
            .with_requires_grad(true);
        let loss = x.mul(&x).unwrap().sum();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0, 8.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn shared_subexpression_accumulates_both_paths() {
        let x = Tensor::<f64>::from_vec(&[1], vec![3.0])
            .unwrap()
            .with_requires_grad(true);
        let y = x.scale(2.0);
        // d/dx (2x * 2x + 2x) = 8x + 2
        let loss = y.mul(&y).unwrap().add(&y).unwrap().sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![26.0]);
    }

    #[test]
    fn detach_cuts_the_graph() {
        let x = Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0])
            .unwrap()
            .with_requires_grad(true);
        let y = x.scale(3.0).detach();
        assert!(!y.requires_grad());
        let loss = y.mul(&x).unwrap().sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![3.0, 6.0]);
    }
}
