use std::rc::Rc;

use super::gradcheck::kinks;
use super::{numel, Element, Tensor};
use crate::error::{Error, Result};

/// Number of times `rhs` tiles over `lhs` when `rhs`'s shape is a suffix of
/// `lhs`'s shape (a scalar is the empty suffix).
fn suffix_repeat(lhs: &[usize], rhs: &[usize], op: &str) -> Result<usize> {
    if rhs.len() > lhs.len() || lhs[lhs.len() - rhs.len()..] != *rhs {
        return Err(Error::shape(format!(
            "{op}: rhs shape {rhs:?} is not a suffix of lhs shape {lhs:?}"
        )));
    }
    Ok(numel(&lhs[..lhs.len() - rhs.len()]))
}

fn reduce_tiles<T: Element>(g: &[T], tile: usize) -> Vec<T> {
    let mut out = vec![T::zero(); tile];
    for chunk in g.chunks_exact(tile) {
        out.iter_mut().zip(chunk).for_each(|(o, v)| *o = *o + *v);
    }
    out
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
}

impl<T: Element> Tensor<T> {
    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(rhs, BinOp::Add)
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(rhs, BinOp::Sub)
    }

    /// Element-wise product; `rhs` may broadcast over leading axes.
    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(rhs, BinOp::Mul)
    }

    fn binary(&self, rhs: &Tensor<T>, op: BinOp) -> Result<Tensor<T>> {
        let name = match op {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
        };
        suffix_repeat(self.shape(), rhs.shape(), name)?;
        let tile = rhs.numel();
        let (a, b) = (self.data_rc(), rhs.data_rc());
        let out: Vec<T> = a
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = b[i % tile];
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                }
            })
            .collect();
        let (a_rg, b_rg) = (self.requires_grad(), rhs.requires_grad());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), rhs.clone()],
            move |g| {
                let ga = a_rg.then(|| match op {
                    BinOp::Add | BinOp::Sub => g.to_vec(),
                    BinOp::Mul => g.iter().enumerate().map(|(i, &v)| v * b[i % tile]).collect(),
                });
                let gb = b_rg.then(|| {
                    let full: Vec<T> = match op {
                        BinOp::Add => g.to_vec(),
                        BinOp::Sub => g.iter().map(|&v| -v).collect(),
                        BinOp::Mul => g.iter().zip(a.iter()).map(|(&v, &x)| v * x).collect(),
                    };
                    reduce_tiles(&full, tile)
                });
                vec![ga, gb]
            },
        ))
    }

    /// Applies `f` element-wise; `df(x, y)` is the local derivative given the
    /// input `x` and output `y`.
    fn unary(&self, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Tensor<T> {
        let x = self.data_rc();
        let y: Rc<Vec<T>> = Rc::new(x.iter().map(|&v| f(v)).collect());
        let y_keep = Rc::clone(&y);
        Tensor::from_op(
            self.shape().to_vec(),
            y.as_ref().clone(),
            vec![self.clone()],
            move |g| {
                vec![Some(
                    g.iter()
                        .zip(x.iter().zip(y_keep.iter()))
                        .map(|(&gv, (&xv, &yv))| gv * df(xv, yv))
                        .collect(),
                )]
            },
        )
    }

    pub fn neg(&self) -> Tensor<T> {
        self.unary(|v| -v, |_, _| -T::one())
    }

    pub fn scale(&self, c: f64) -> Tensor<T> {
        let c = T::lit(c);
        self.unary(move |v| v * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor<T> {
        let c = T::lit(c);
        self.unary(move |v| v + c, |_, _| T::one())
    }

    pub fn relu(&self) -> Tensor<T> {
        kinks::observe(self.data());
        self.unary(
            |v| if v > T::zero() { v } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<T> {
        let s = T::lit(slope);
        kinks::observe(self.data());
        self.unary(
            move |v| if v > T::zero() { v } else { v * s },
            move |x, _| if x > T::zero() { T::one() } else { s },
        )
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary(sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.unary(|v| v.tanh(), |_, y| T::one() - y * y)
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary(|v| v.exp(), |_, y| y)
    }

    pub fn log(&self) -> Tensor<T> {
        self.unary(|v| v.ln(), |x, _| x.recip())
    }

    pub fn abs(&self) -> Tensor<T> {
        kinks::observe(self.data());
        self.unary(|v| v.abs(), |x, _| x.signum() * (if x == T::zero() { T::zero() } else { T::one() }))
    }

    /// `log(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self) -> Tensor<T> {
        self.unary(softplus, |x, _| sigmoid(x))
    }

    /// `log σ(x) = -softplus(-x)`, finite for any finite `x`.
    pub fn log_sigmoid(&self) -> Tensor<T> {
        self.unary(|v| -softplus(-v), |x, _| sigmoid(-x))
    }

    pub fn sum(&self) -> Tensor<T> {
        let total = self.data().iter().copied().sum::<T>();
        let n = self.numel();
        Tensor::from_op(Vec::new(), vec![total], vec![self.clone()], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel();
        let inv = T::one() / T::from_usize(n).unwrap();
        let total = self.data().iter().copied().sum::<T>();
        Tensor::from_op(Vec::new(), vec![total * inv], vec![self.clone()], move |g| {
            vec![Some(vec![g[0] * inv; n])]
        })
    }

    /// L1 norm, `Σ|x|`.
    pub fn abs_sum(&self) -> Tensor<T> {
        let x = self.data_rc();
        kinks::observe(&x);
        let total = x.iter().map(|v| v.abs()).sum::<T>();
        Tensor::from_op(Vec::new(), vec![total], vec![self.clone()], move |g| {
            vec![Some(
                x.iter()
                    .map(|&v| if v == T::zero() { T::zero() } else { g[0] * v.signum() })
                    .collect(),
            )]
        })
    }

    /// Softmax over the last axis, max-shifted for stability.
    pub fn softmax(&self) -> Result<Tensor<T>> {
        let Some(&width) = self.shape().last() else {
            return Err(Error::shape("softmax of a scalar"));
        };
        let mut y = self.to_vec();
        for row in y.chunks_exact_mut(width) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            let inv = total.recip();
            row.iter_mut().for_each(|v| *v = *v * inv);
        }
        let y_keep = Rc::new(y.clone());
        Ok(Tensor::from_op(self.shape().to_vec(), y, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); g.len()];
            for ((gr, yr), out) in g
                .chunks_exact(width)
                .zip(y_keep.chunks_exact(width))
                .zip(gx.chunks_exact_mut(width))
            {
                let dot = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<T>();
                for ((o, &gv), &yv) in out.iter_mut().zip(gr).zip(yr) {
                    *o = yv * (gv - dot);
                }
            }
            vec![Some(gx)]
        }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() || shape.contains(&0) {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape()
            )));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            |g| vec![Some(g.to_vec())],
        ))
    }

    /// Reorders axes; output axis `i` is input axis `axes[i]`. Materializes.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<T>> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::shape(format!(
                "invalid permutation {axes:?} for rank {rank}"
            )));
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
        let out = permute_data(self.data(), &in_shape, axes);
        let mut inverse = vec![0; rank];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let os = out_shape.clone();
        Ok(Tensor::from_op(out_shape, out, vec![self.clone()], move |g| {
            vec![Some(permute_data(g, &os, &inverse))]
        }))
    }

    /// Swaps two axes.
    pub fn transpose(&self, a: usize, b: usize) -> Result<Tensor<T>> {
        let mut axes: Vec<usize> = (0..self.rank()).collect();
        if a >= axes.len() || b >= axes.len() {
            return Err(Error::shape(format!("transpose axes {a},{b} out of range")));
        }
        axes.swap(a, b);
        self.permute(&axes)
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat of zero tensors"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::shape(format!("concat axis {axis} >= rank {rank}")));
        }
        for p in parts {
            let ok = p.rank() == rank
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape(format!(
                    "concat along axis {axis}: {:?} vs {:?}",
                    first.shape(),
                    p.shape()
                )));
            }
        }
        let outer = numel(&first.shape()[..axis]);
        let inner = numel(&first.shape()[axis + 1..]);
        let widths: Vec<usize> = parts.iter().map(|p| p.shape()[axis] * inner).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&p.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total / inner;
        let flags: Vec<bool> = parts.iter().map(Tensor::requires_grad).collect();
        Ok(Tensor::from_op(shape, out, parts.to_vec(), move |g| {
            let mut offset = 0;
            widths
                .iter()
                .zip(&flags)
                .map(|(&w, &rg)| {
                    let start = offset;
                    offset += w;
                    rg.then(|| {
                        let mut gi = Vec::with_capacity(outer * w);
                        for o in 0..outer {
                            gi.extend_from_slice(&g[o * total + start..o * total + start + w]);
                        }
                        gi
                    })
                })
                .collect()
        }))
    }

    /// The sub-range `start..start+len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::shape(format!(
                "narrow({axis}, {start}, {len}) out of range for {shape:?}"
            )));
        }
        let outer = numel(&shape[..axis]);
        let inner = numel(&shape[axis + 1..]);
        let (full, w) = (shape[axis] * inner, len * inner);
        let src = self.data();
        let mut out = Vec::with_capacity(outer * w);
        for o in 0..outer {
            let base = o * full + start * inner;
            out.extend_from_slice(&src[base..base + w]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let in_numel = self.numel();
        Ok(Tensor::from_op(out_shape, out, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); in_numel];
            for o in 0..outer {
                let base = o * full + start * inner;
                gx[base..base + w].copy_from_slice(&g[o * w..(o + 1) * w]);
            }
            vec![Some(gx)]
        }))
    }

    /// Splits along `axis` into consecutive pieces of the given sizes.
    pub fn split(&self, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
        if axis >= self.rank() || sizes.iter().sum::<usize>() != self.shape()[axis] {
            return Err(Error::shape(format!(
                "split sizes {sizes:?} do not cover axis {axis} of {:?}",
                self.shape()
            )));
        }
        let mut start = 0;
        sizes
            .iter()
            .map(|&len| {
                let piece = self.narrow(axis, start, len);
                start += len;
                piece
            })
            .collect()
    }

    /// Nearest-neighbour upsampling of an `N×C×H×W` tensor by an integer factor.
    pub fn upsample_nearest2d(&self, factor: usize) -> Result<Tensor<T>> {
        let &[n, c, h, w] = self.shape() else {
            return Err(Error::shape(format!(
                "upsample expects N×C×H×W, got {:?}",
                self.shape()
            )));
        };
        if factor == 0 {
            return Err(Error::config("upsample factor must be positive"));
        }
        let (oh, ow) = (h * factor, w * factor);
        let src = self.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in src.chunks_exact(h * w) {
            for y in 0..oh {
                let row = &plane[(y / factor) * w..(y / factor + 1) * w];
                for x in 0..ow {
                    out.push(row[x / factor]);
                }
            }
        }
        Ok(Tensor::from_op(
            vec![n, c, oh, ow],
            out,
            vec![self.clone()],
            move |g| {
                let mut gx = vec![T::zero(); n * c * h * w];
                for (p, gp) in g.chunks_exact(oh * ow).enumerate() {
                    let dst = &mut gx[p * h * w..(p + 1) * h * w];
                    for y in 0..oh {
                        for x in 0..ow {
                            let d = &mut dst[(y / factor) * w + x / factor];
                            *d = *d + gp[y * ow + x];
                        }
                    }
                }
                vec![Some(gx)]
            },
        ))
    }
}

pub(crate) fn sigmoid<T: Element>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus<T: Element>(v: T) -> T {
    // max(v, 0) + log1p(e^{-|v|})
    v.max(T::zero()) + (-v.abs()).exp().ln_1p()
}

pub(crate) fn permute_data<T: Element>(src: &[T], shape: &[usize], axes: &[usize]) -> Vec<T> {
    let rank = shape.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let total = src.len();
    let mut out = Vec::with_capacity(total);
    if rank == 0 {
        out.extend_from_slice(src);
        return out;
    }
    // Innermost output axis handled as a strided run.
    let last = rank - 1;
    let (run, run_stride) = (out_shape[last], strides[last]);
    let mut idx = vec![0usize; rank];
    let mut base = 0usize;
    while out.len() < total {
        out.extend((0..run).map(|j| src[base + j * run_stride]));
        let mut ax = last;
        loop {
            if ax == 0 {
                return out;
            }
            ax -= 1;
            idx[ax] += 1;
            base += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            base -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}
