//! Decoupled Transformer blocks.
//!
//! Both block kinds share the same sub-layers and differ only in how tokens
//! are grouped before attention: a temporal block attends over the `t·n`
//! tokens of one zone across all frames, a spatial block over the `s²·n`
//! tokens of one frame. No positional encoding, no normalization.

use super::params::{init_linear, ParamStore};
use super::{BlockKind, ModelConfig, TokenGrid};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Element, Tensor};

/// Parameters of one block, resolved from the store under `blocks.{i}`.
pub struct BlockParams<T: Element> {
    pub q: (Tensor<T>, Tensor<T>),
    pub k: (Tensor<T>, Tensor<T>),
    pub v: (Tensor<T>, Tensor<T>),
    pub out: (Tensor<T>, Tensor<T>),
    pub fc1: (Tensor<T>, Tensor<T>),
    pub fc2: (Tensor<T>, Tensor<T>),
    pub heads: usize,
    pub residual_from_attention: bool,
}

fn linear_pair<T: Element>(params: &ParamStore<T>, prefix: &str) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((
        params.get(&format!("{prefix}.weight"))?.clone(),
        params.get(&format!("{prefix}.bias"))?.clone(),
    ))
}

impl<T: Element> BlockParams<T> {
    pub fn from_store(params: &ParamStore<T>, index: usize, cfg: &ModelConfig) -> Result<Self> {
        let p = format!("blocks.{index}");
        Ok(Self {
            q: linear_pair(params, &format!("{p}.attn.q"))?,
            k: linear_pair(params, &format!("{p}.attn.k"))?,
            v: linear_pair(params, &format!("{p}.attn.v"))?,
            out: linear_pair(params, &format!("{p}.attn.out"))?,
            fc1: linear_pair(params, &format!("{p}.ffn.fc1"))?,
            fc2: linear_pair(params, &format!("{p}.ffn.fc2"))?,
            heads: cfg.heads,
            residual_from_attention: cfg.residual_from_attention,
        })
    }
}

pub(crate) fn init<T: Element>(cfg: &ModelConfig, store: &mut ParamStore<T>, rng: &mut SeededRng) {
    let (d, hidden) = (cfg.token_dim, cfg.ffn_hidden);
    for i in 0..cfg.stacking.chars().count() {
        let p = format!("blocks.{i}");
        for name in ["q", "k", "v", "out"] {
            init_linear(store, rng, &format!("{p}.attn.{name}"), d, d, 1.0);
        }
        init_linear(store, rng, &format!("{p}.ffn.fc1"), d, hidden, 2.0);
        init_linear(store, rng, &format!("{p}.ffn.fc2"), hidden, d, 1.0);
    }
}

fn linear<T: Element>(x: &Tensor<T>, (w, b): &(Tensor<T>, Tensor<T>)) -> Result<Tensor<T>> {
    x.matmul(w)?.add(b)
}

/// Scaled dot-product attention over batched heads:
/// `softmax(q·kᵀ / sqrt(dk))·v` for `q, k, v` of shape `B×N×dk`.
///
/// This is the only place attention MACs are spent: `2·B·N²·dk`.
pub fn attention<T: Element>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    let dk = *q
        .shape()
        .last()
        .ok_or_else(|| Error::shape("attention on a scalar"))?;
    let scores = q.matmul_nt(k)?.scale(1.0 / (dk as f64).sqrt());
    scores.softmax()?.matmul(v)
}

/// Multi-head self-attention on token groups `G×N×d`.
pub fn multi_head_attention<T: Element>(x: &Tensor<T>, p: &BlockParams<T>) -> Result<Tensor<T>> {
    let &[g, n, d] = x.shape() else {
        return Err(Error::shape(format!("MSA input must be G×N×d, got {:?}", x.shape())));
    };
    let h = p.heads;
    if d % h != 0 {
        return Err(Error::config(format!("token dim {d} not divisible by {h} heads")));
    }
    let dh = d / h;
    let split = |t: Tensor<T>| -> Result<Tensor<T>> {
        t.reshape(&[g, n, h, dh])?.permute(&[0, 2, 1, 3])?.reshape(&[g * h, n, dh])
    };
    let q = split(linear(x, &p.q)?)?;
    let k = split(linear(x, &p.k)?)?;
    let v = split(linear(x, &p.v)?)?;
    let ctx = attention(&q, &k, &v)?
        .reshape(&[g, h, n, dh])?
        .permute(&[0, 2, 1, 3])?
        .reshape(&[g, n, d])?;
    linear(&ctx, &p.out)
}

pub fn feed_forward<T: Element>(x: &Tensor<T>, p: &BlockParams<T>) -> Result<Tensor<T>> {
    linear(&linear(x, &p.fc1)?.relu(), &p.fc2)
}

/// One Transformer block on grouped tokens: `FFN(MSA(P) + P) + P`.
pub fn transformer_block<T: Element>(groups: &Tensor<T>, p: &BlockParams<T>) -> Result<Tensor<T>> {
    let attended = multi_head_attention(groups, p)?.add(groups)?;
    let skip = if p.residual_from_attention { &attended } else { groups };
    feed_forward(&attended, p)?.add(skip)
}

/// Temporally-decoupled block: each zone `(j,k)` forms one group of `t·n` tokens.
pub fn temporal_block<T: Element>(grid: &TokenGrid<T>, s: usize, p: &BlockParams<T>) -> Result<TokenGrid<T>> {
    let groups = grid.temporal_groups(s)?;
    let out = transformer_block(&groups, p)?;
    grid.from_temporal_groups(&out, s)
}

/// Spatially-decoupled block: each frame forms one group of `s²·n` tokens.
pub fn spatial_block<T: Element>(grid: &TokenGrid<T>, s: usize, p: &BlockParams<T>) -> Result<TokenGrid<T>> {
    let groups = grid.spatial_groups(s)?;
    let out = transformer_block(&groups, p)?;
    grid.from_spatial_groups(&out, s)
}

/// Applies the blocks named by `cfg.stacking`, left to right.
pub fn run_blocks<T: Element>(grid: &TokenGrid<T>, cfg: &ModelConfig, params: &ParamStore<T>) -> Result<TokenGrid<T>> {
    let mut x = grid.clone();
    for (i, kind) in cfg.blocks()?.into_iter().enumerate() {
        let p = BlockParams::from_store(params, i, cfg)?;
        x = match kind {
            BlockKind::Temporal => temporal_block(&x, cfg.zone_split, &p)?,
            BlockKind::Spatial => spatial_block(&x, cfg.zone_split, &p)?,
        };
    }
    Ok(x)
}
