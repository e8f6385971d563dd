//! Scaled dot-product attention, multi-head attention and the
//! position-wise feedforward block, on batched `[B, n, d]` variables.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Row-major `n_q × n_k` allow mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub n_q: usize,
    pub n_k: usize,
    pub allowed: Arc<Vec<bool>>,
}

impl Mask {
    pub fn new(n_q: usize, n_k: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != n_q * n_k {
            return Err(Error::shape("mask", &[n_q, n_k], &[allowed.len()]));
        }
        Ok(Self {
            n_q,
            n_k,
            allowed: Arc::new(allowed),
        })
    }

    /// Query `i` may attend to keys `0..=i`.
    pub fn causal(n: usize) -> Self {
        let allowed = (0..n * n).map(|k| k % n <= k / n).collect();
        Self::new(n, n, allowed).expect("sized")
    }
}

/// `softmax(QKᵀ·scale + mask)·V` and the attention weights.
pub fn attention_scaled<'g>(
    q: Var<'g>,
    k: Var<'g>,
    v: Var<'g>,
    mask: Option<&Mask>,
    scale: f64,
) -> Result<(Var<'g>, Var<'g>)> {
    let scores = q.bmm(k, true)?.scale(scale);
    let scores = match mask {
        Some(m) => scores.mask_fill(Arc::clone(&m.allowed), [m.n_q, m.n_k])?,
        None => scores,
    };
    let w = scores.softmax_rows()?;
    Ok((w.bmm(v, false)?, w))
}

/// Attention with the `1/√d_k` scale; `q`, `k`, `v` are `[B, n, d]`.
pub fn scaled_dot_attention<'g>(
    q: Var<'g>,
    k: Var<'g>,
    v: Var<'g>,
    mask: Option<&Mask>,
) -> Result<(Var<'g>, Var<'g>)> {
    let dk = *q.shape().last().unwrap_or(&1);
    attention_scaled(q, k, v, mask, 1.0 / (dk as f64).sqrt())
}

/// Plain-matrix convenience wrapper: `q: n_q×d_k`, `k: n_k×d_k`,
/// `v: n_k×d_v`.
pub fn scaled_dot_attention_matrix(q: &Tensor, k: &Tensor, v: &Tensor, mask: Option<&Mask>) -> Result<Tensor> {
    let g = Graph::new();
    let lift = |t: &Tensor| -> Result<Var<'_>> {
        if t.rank() != 2 {
            return Err(Error::shape("attention input", t.shape(), &[0, 0]));
        }
        let mut s = vec![1];
        s.extend_from_slice(t.shape());
        Ok(g.constant(t.clone().reshape(&s)?))
    };
    let (out, _) = scaled_dot_attention(lift(q)?, lift(k)?, lift(v)?, mask)?;
    let out = out.value();
    (*out).clone().reshape(&out.shape()[1..])
}

/// Projection weights of one attention block; `q`, `k`, `v` hold the `h`
/// per-head `d_model × d_k` matrices side by side.
#[derive(Clone, Copy)]
pub struct AttnWeights<'g> {
    pub q: Var<'g>,
    pub k: Var<'g>,
    pub v: Var<'g>,
    pub o: Var<'g>,
}

/// Multi-head attention. Per-head weight maps are appended to `maps`.
pub fn multi_head<'g>(
    x_q: Var<'g>,
    x_kv: Var<'g>,
    w: AttnWeights<'g>,
    h: usize,
    mask: Option<&Mask>,
    mut maps: Option<&mut Vec<Arc<Tensor>>>,
) -> Result<Var<'g>> {
    let d = *x_q.shape().last().unwrap_or(&0);
    if h == 0 || !d.is_multiple_of(h) {
        return Err(Error::shape("multi_head heads", &[d], &[h]));
    }
    let dk = d / h;
    let q = x_q.matmul(w.q)?;
    let k = x_kv.matmul(w.k)?;
    let v = x_kv.matmul(w.v)?;
    let mut heads = Vec::with_capacity(h);
    for i in 0..h {
        let (out, weights) = scaled_dot_attention(
            q.slice_last(i * dk, dk)?,
            k.slice_last(i * dk, dk)?,
            v.slice_last(i * dk, dk)?,
            mask,
        )?;
        if let Some(m) = maps.as_deref_mut() {
            m.push(weights.value());
        }
        heads.push(out);
    }
    let cat = if h == 1 { heads[0] } else { Var::concat_last(&heads)? };
    cat.matmul(w.o)
}

/// `max(0, x·W1 + b1)·W2 + b2`, applied to every position.
pub fn feedforward<'g>(x: Var<'g>, w1: Var<'g>, b1: Var<'g>, w2: Var<'g>, b2: Var<'g>) -> Result<Var<'g>> {
    x.matmul(w1)?.add_broadcast(b1)?.relu().matmul(w2)?.add_broadcast(b2)
}
