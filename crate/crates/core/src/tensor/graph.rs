//! Reverse-mode differentiation over a per-forward-pass operation tape.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Calling
//! [`Graph::backward`] on a scalar output walks the tape in reverse and
//! returns [`Gradients`] for every leaf that asked for one. Parameters enter
//! through [`Graph::param`]; each parameter gets one leaf per graph, so a
//! weight used in several places (shared embeddings) accumulates all of its
//! contributions.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::kernels::{gemm, gemm_at, gemm_bt};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    BatchMatMul {
        a: usize,
        b: usize,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
    },
    Add(usize, usize),
    AddBroadcast(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softmax(usize),
    MaskFill {
        a: usize,
        allowed: Arc<Vec<bool>>,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Dropout {
        a: usize,
        mask: Vec<f64>,
    },
    ConcatLast(Vec<(usize, usize)>),
    ConcatRows {
        parts: Vec<(usize, usize)>,
        outer: usize,
        inner: usize,
    },
    SliceRows {
        a: usize,
        start: usize,
        rows_in: usize,
        len: usize,
        inner: usize,
    },
    SliceLast {
        a: usize,
        start: usize,
        width_in: usize,
        len: usize,
    },
    Reshape(usize),
    Expand {
        a: usize,
        batch: usize,
    },
    Sum(usize),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    param_nodes: RefCell<HashMap<ParamId, usize>>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

fn split_last(shape: &[usize]) -> (usize, usize) {
    let w = shape.last().copied().unwrap_or(1);
    let rows = if w == 0 { 0 } else { shape.iter().product::<usize>() / w };
    (rows, w)
}

/// Views `shape` as `[outer, rows, inner]` around dim -2.
fn split_rows(shape: &[usize]) -> Option<(usize, usize, usize)> {
    let r = shape.len();
    if r < 2 {
        return None;
    }
    Some((shape[..r - 2].iter().product(), shape[r - 2], shape[r - 1]))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        self.push_arc(Arc::new(value), op, needs_grad)
    }

    fn push_arc(&self, value: Arc<Tensor>, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn val(&self, id: usize) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    fn ng(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn var(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, true)
    }

    /// The parameter `id` of `store` as a differentiable leaf.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        if let Some(&node) = self.param_nodes.borrow().get(&id) {
            return Var { graph: self, id: node };
        }
        let v = self.push_arc(store.shared(id), Op::Param(id), true);
        self.param_nodes.borrow_mut().insert(id, v.id);
        v
    }

    /// Reverse pass from a single-element output.
    pub fn backward(&self, out: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[out.id].value.numel() != 1 {
            return Err(Error::shape("backward (needs a scalar)", nodes[out.id].value.shape(), &[1]));
        }
        let n = out.id + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[out.id] = Some(vec![1.0]);

        fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> Option<&'a mut [f64]> {
            if !nodes[id].needs_grad {
                return None;
            }
            let len = nodes[id].value.numel();
            Some(grads[id].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
        }

        for id in (0..n).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let y = node.value.data();
            match &node.op {
                Op::Leaf | Op::Param(_) => {
                    grads[id] = Some(g);
                    continue;
                }
                &Op::MatMul { a, b, m, k, n } => {
                    let av = nodes[a].value.data();
                    let bv = nodes[b].value.data();
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        gemm_bt(&g, bv, ga, m, n, k);
                    }
                    if let Some(gb) = acc(&mut grads, &nodes, b) {
                        gemm_at(av, &g, gb, m, k, n);
                    }
                }
                &Op::BatchMatMul {
                    a,
                    b,
                    batch,
                    m,
                    k,
                    n,
                    trans_b,
                } => {
                    let av = nodes[a].value.data();
                    let bv = nodes[b].value.data();
                    let (sa, sb, sg) = (m * k, k * n, m * n);
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        for t in 0..batch {
                            let gt = &g[t * sg..(t + 1) * sg];
                            let bt = &bv[t * sb..(t + 1) * sb];
                            let out = &mut ga[t * sa..(t + 1) * sa];
                            if trans_b {
                                gemm(gt, bt, out, m, n, k);
                            } else {
                                gemm_bt(gt, bt, out, m, n, k);
                            }
                        }
                    }
                    if let Some(gb) = acc(&mut grads, &nodes, b) {
                        for t in 0..batch {
                            let gt = &g[t * sg..(t + 1) * sg];
                            let at = &av[t * sa..(t + 1) * sa];
                            let out = &mut gb[t * sb..(t + 1) * sb];
                            if trans_b {
                                gemm_at(gt, at, out, m, n, k);
                            } else {
                                gemm_at(at, gt, out, m, k, n);
                            }
                        }
                    }
                }
                &Op::Add(a, b) => {
                    for src in [a, b] {
                        if let Some(ga) = acc(&mut grads, &nodes, src) {
                            ga.iter_mut().zip(&g).for_each(|(x, d)| *x += d);
                        }
                    }
                }
                &Op::AddBroadcast(a, b) => {
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        ga.iter_mut().zip(&g).for_each(|(x, d)| *x += d);
                    }
                    if let Some(gb) = acc(&mut grads, &nodes, b) {
                        let bn = gb.len();
                        for chunk in g.chunks(bn) {
                            gb.iter_mut().zip(chunk).for_each(|(x, d)| *x += d);
                        }
                    }
                }
                &Op::Sub(a, b) => {
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        ga.iter_mut().zip(&g).for_each(|(x, d)| *x += d);
                    }
                    if let Some(gb) = acc(&mut grads, &nodes, b) {
                        gb.iter_mut().zip(&g).for_each(|(x, d)| *x -= d);
                    }
                }
                &Op::Mul(a, b) => {
                    let av = Arc::clone(&nodes[a].value);
                    let bv = Arc::clone(&nodes[b].value);
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        for ((x, d), o) in ga.iter_mut().zip(&g).zip(bv.data()) {
                            *x += d * o;
                        }
                    }
                    if let Some(gb) = acc(&mut grads, &nodes, b) {
                        for ((x, d), o) in gb.iter_mut().zip(&g).zip(av.data()) {
                            *x += d * o;
                        }
                    }
                }
                &Op::Scale(a, c) => {
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        ga.iter_mut().zip(&g).for_each(|(x, d)| *x += c * d);
                    }
                }
                &Op::Relu(a) => {
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        for ((x, d), o) in ga.iter_mut().zip(&g).zip(y) {
                            if *o > 0.0 {
                                *x += d;
                            }
                        }
                    }
                }
                &Op::Tanh(a) => {
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        for ((x, d), o) in ga.iter_mut().zip(&g).zip(y) {
                            *x += d * (1.0 - o * o);
                        }
                    }
                }
                &Op::Sigmoid(a) => {
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        for ((x, d), o) in ga.iter_mut().zip(&g).zip(y) {
                            *x += d * o * (1.0 - o);
                        }
                    }
                }
                &Op::Softmax(a) => {
                    let w = node.value.last_dim();
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        for ((gr, yr), xr) in g.chunks(w).zip(y.chunks(w)).zip(ga.chunks_mut(w)) {
                            let dot: f64 = gr.iter().zip(yr).map(|(d, p)| d * p).sum();
                            for ((x, d), p) in xr.iter_mut().zip(gr).zip(yr) {
                                *x += p * (d - dot);
                            }
                        }
                    }
                }
                Op::MaskFill { a, allowed } => {
                    let mlen = allowed.len();
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        for (i, (x, d)) in ga.iter_mut().zip(&g).enumerate() {
                            if allowed[i % mlen] {
                                *x += d;
                            }
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let d = nodes[*gain].value.numel();
                    let gamma = Arc::clone(&nodes[*gain].value);
                    if let Some(gg) = acc(&mut grads, &nodes, *gain) {
                        for (gr, hr) in g.chunks(d).zip(xhat.chunks(d)) {
                            for ((o, a), h) in gg.iter_mut().zip(gr).zip(hr) {
                                *o += a * h;
                            }
                        }
                    }
                    if let Some(gbias) = acc(&mut grads, &nodes, *bias) {
                        for gr in g.chunks(d) {
                            gbias.iter_mut().zip(gr).for_each(|(o, a)| *o += a);
                        }
                    }
                    if let Some(gx) = acc(&mut grads, &nodes, *x) {
                        let mut dxhat = vec![0.0; d];
                        for (r, ((gr, hr), xr)) in
                            g.chunks(d).zip(xhat.chunks(d)).zip(gx.chunks_mut(d)).enumerate()
                        {
                            for ((o, a), c) in dxhat.iter_mut().zip(gr).zip(gamma.data()) {
                                *o = a * c;
                            }
                            let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                            let mean_dh =
                                dxhat.iter().zip(hr).map(|(a, h)| a * h).sum::<f64>() / d as f64;
                            for ((o, a), h) in xr.iter_mut().zip(&dxhat).zip(hr) {
                                *o += rstd[r] * (a - mean_d - h * mean_dh);
                            }
                        }
                    }
                }
                Op::Dropout { a, mask } => {
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        for ((x, d), m) in ga.iter_mut().zip(&g).zip(mask) {
                            *x += d * m;
                        }
                    }
                }
                Op::ConcatLast(parts) => {
                    let total: usize = parts.iter().map(|p| p.1).sum();
                    let rows = g.len() / total.max(1);
                    let mut off = 0;
                    for &(p, w) in parts {
                        if let Some(gp) = acc(&mut grads, &nodes, p) {
                            for r in 0..rows {
                                let src = &g[r * total + off..r * total + off + w];
                                gp[r * w..(r + 1) * w]
                                    .iter_mut()
                                    .zip(src)
                                    .for_each(|(x, d)| *x += d);
                            }
                        }
                        off += w;
                    }
                }
                Op::ConcatRows { parts, outer, inner } => {
                    let total: usize = parts.iter().map(|p| p.1).sum();
                    let mut off = 0;
                    for &(p, rows) in parts {
                        if let Some(gp) = acc(&mut grads, &nodes, p) {
                            for o in 0..*outer {
                                let src = &g[(o * total + off) * inner..(o * total + off + rows) * inner];
                                gp[o * rows * inner..(o + 1) * rows * inner]
                                    .iter_mut()
                                    .zip(src)
                                    .for_each(|(x, d)| *x += d);
                            }
                        }
                        off += rows;
                    }
                }
                &Op::SliceRows {
                    a,
                    start,
                    rows_in,
                    len,
                    inner,
                } => {
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        let outer = g.len() / (len * inner).max(1);
                        for o in 0..outer {
                            let dst = &mut ga[(o * rows_in + start) * inner..(o * rows_in + start + len) * inner];
                            let src = &g[o * len * inner..(o + 1) * len * inner];
                            dst.iter_mut().zip(src).for_each(|(x, d)| *x += d);
                        }
                    }
                }
                &Op::SliceLast {
                    a,
                    start,
                    width_in,
                    len,
                } => {
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        let rows = g.len() / len.max(1);
                        for r in 0..rows {
                            let dst = &mut ga[r * width_in + start..r * width_in + start + len];
                            let src = &g[r * len..(r + 1) * len];
                            dst.iter_mut().zip(src).for_each(|(x, d)| *x += d);
                        }
                    }
                }
                &Op::Reshape(a) => {
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        ga.iter_mut().zip(&g).for_each(|(x, d)| *x += d);
                    }
                }
                &Op::Expand { a, batch } => {
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        let per = g.len() / batch.max(1);
                        for chunk in g.chunks(per.max(1)) {
                            ga.iter_mut().zip(chunk).for_each(|(x, d)| *x += d);
                        }
                    }
                }
                &Op::Sum(a) => {
                    if let Some(ga) = acc(&mut grads, &nodes, a) {
                        ga.iter_mut().for_each(|x| *x += g[0]);
                    }
                }
            }
        }

        let params = nodes[..n]
            .iter()
            .enumerate()
            .filter_map(|(i, nd)| match nd.op {
                Op::Param(p) => Some((p, i)),
                _ => None,
            })
            .collect();
        let shapes = nodes[..n].iter().map(|nd| nd.value.shape().to_vec()).collect();
        Ok(Gradients {
            grads,
            shapes,
            params,
        })
    }
}

/// Gradients of one backward pass.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient with respect to a leaf created by [`Graph::var`] or
    /// [`Graph::param`]. Leaves the output does not depend on get zeros.
    pub fn wrt(&self, v: Var<'_>) -> Option<Tensor> {
        let shape = self.shapes.get(v.id)?;
        let data = match self.grads.get(v.id) {
            Some(Some(g)) => g.clone(),
            _ => vec![0.0; shape.iter().product()],
        };
        Tensor::new(shape, data).ok()
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|&(_, node)| self.grads[node].as_deref())
    }

    /// Adds every parameter gradient into `store`'s accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(p, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.accumulate(p, g);
            }
        }
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.graph.val(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    fn ng(&self) -> bool {
        self.graph.ng(self.id)
    }

    fn same_graph(&self, other: &Var<'_>) {
        assert!(
            std::ptr::eq(self.graph, other.graph),
            "variables from different graphs"
        );
    }

    /// `self[.., m, k] · w[k, n]`.
    pub fn matmul(&self, w: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(&w);
        let a = self.value();
        let b = w.value();
        if a.rank() < 1 || b.rank() != 2 || a.last_dim() != b.shape()[0] {
            return Err(Error::shape("matmul", a.shape(), b.shape()));
        }
        let (k, n) = (b.shape()[0], b.shape()[1]);
        let m = if k == 0 { 0 } else { a.numel() / k };
        let mut out = vec![0.0; m * n];
        gemm(a.data(), b.data(), &mut out, m, k, n);
        let mut shape = a.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let ng = self.ng() || w.ng();
        Ok(self.graph.push(
            Tensor::new(&shape, out)?,
            Op::MatMul {
                a: self.id,
                b: w.id,
                m,
                k,
                n,
            },
            ng,
        ))
    }

    /// Batched `[B, m, k] · [B, k, n]`, or `[B, m, k] · [B, n, k]ᵀ` when
    /// `trans_b`.
    pub fn bmm(&self, other: Var<'g>, trans_b: bool) -> Result<Var<'g>> {
        self.same_graph(&other);
        let a = self.value();
        let b = other.value();
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(Error::shape("bmm", sa, sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(Error::shape("bmm", sa, sb));
        }
        let mut out = vec![0.0; batch * m * n];
        for t in 0..batch {
            let at = &a.data()[t * m * k..(t + 1) * m * k];
            let bt = &b.data()[t * k * n..(t + 1) * k * n];
            let ot = &mut out[t * m * n..(t + 1) * m * n];
            if trans_b {
                gemm_bt(at, bt, ot, m, k, n);
            } else {
                gemm(at, bt, ot, m, k, n);
            }
        }
        let ng = self.ng() || other.ng();
        Ok(self.graph.push(
            Tensor::new(&[batch, m, n], out)?,
            Op::BatchMatMul {
                a: self.id,
                b: other.id,
                batch,
                m,
                k,
                n,
                trans_b,
            },
            ng,
        ))
    }

    fn zip_same(&self, other: Var<'g>, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_graph(&other);
        let a = self.value();
        let b = other.value();
        if a.shape() != b.shape() {
            return Err(Error::shape(name, a.shape(), b.shape()));
        }
        Tensor::new(
            a.shape(),
            a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect(),
        )
    }

    pub fn add(&self, other: Var<'g>) -> Result<Var<'g>> {
        let t = self.zip_same(other, "add", |x, y| x + y)?;
        Ok(self.graph.push(t, Op::Add(self.id, other.id), self.ng() || other.ng()))
    }

    pub fn sub(&self, other: Var<'g>) -> Result<Var<'g>> {
        let t = self.zip_same(other, "sub", |x, y| x - y)?;
        Ok(self.graph.push(t, Op::Sub(self.id, other.id), self.ng() || other.ng()))
    }

    pub fn mul(&self, other: Var<'g>) -> Result<Var<'g>> {
        let t = self.zip_same(other, "mul", |x, y| x * y)?;
        Ok(self.graph.push(t, Op::Mul(self.id, other.id), self.ng() || other.ng()))
    }

    /// Adds `b` to every trailing block of `self`; `b`'s shape must be a
    /// suffix of `self`'s (bias rows, positional tables).
    pub fn add_broadcast(&self, b: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(&b);
        let a = self.value();
        let bv = b.value();
        let (sa, sb) = (a.shape(), bv.shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::shape("add_broadcast", sa, sb));
        }
        let bn = bv.numel();
        let data = a
            .data()
            .chunks(bn.max(1))
            .flat_map(|c| c.iter().zip(bv.data()).map(|(x, y)| x + y))
            .collect();
        Ok(self.graph.push(
            Tensor::new(sa, data)?,
            Op::AddBroadcast(self.id, b.id),
            self.ng() || b.ng(),
        ))
    }

    fn map(&self, f: impl Fn(f64) -> f64, op: Op) -> Var<'g> {
        let a = self.value();
        let t = Tensor::new(a.shape(), a.data().iter().map(|&x| f(x)).collect()).unwrap();
        self.graph.push(t, op, self.ng())
    }

    pub fn scale(&self, c: f64) -> Var<'g> {
        self.map(|x| c * x, Op::Scale(self.id, c))
    }

    pub fn relu(&self) -> Var<'g> {
        self.map(|x| x.max(0.0), Op::Relu(self.id))
    }

    pub fn tanh(&self) -> Var<'g> {
        self.map(f64::tanh, Op::Tanh(self.id))
    }

    pub fn sigmoid(&self) -> Var<'g> {
        self.map(
            |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            },
            Op::Sigmoid(self.id),
        )
    }

    /// Softmax over the last dimension. `-inf` entries get exactly zero
    /// weight; a row of only `-inf` is a domain error. NaN rows stay NaN.
    pub fn softmax_rows(&self) -> Result<Var<'g>> {
        let a = self.value();
        let w = a.last_dim();
        if w == 0 {
            return Err(Error::Domain("softmax over an empty dimension".into()));
        }
        let mut out = vec![0.0; a.numel()];
        for (xr, yr) in a.data().chunks(w).zip(out.chunks_mut(w)) {
            if xr.iter().any(|x| x.is_nan()) {
                yr.fill(f64::NAN);
                continue;
            }
            let max = xr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::Domain("softmax row is entirely masked".into()));
            }
            let mut s = 0.0;
            for (y, &x) in yr.iter_mut().zip(xr) {
                *y = (x - max).exp();
                s += *y;
            }
            for y in yr.iter_mut() {
                *y /= s;
            }
        }
        Ok(self.graph.push(
            Tensor::new(a.shape(), out)?,
            Op::Softmax(self.id),
            self.ng(),
        ))
    }

    /// Replaces forbidden entries with `-inf`. `allowed` covers the trailing
    /// `[n_q, n_k]` block and repeats over leading dimensions.
    pub fn mask_fill(&self, allowed: Arc<Vec<bool>>, mask_shape: [usize; 2]) -> Result<Var<'g>> {
        let a = self.value();
        let s = a.shape();
        if s.len() < 2 || s[s.len() - 2..] != mask_shape || allowed.len() != mask_shape[0] * mask_shape[1] {
            return Err(Error::shape("mask_fill", s, &mask_shape));
        }
        let m = allowed.len();
        let data = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| if allowed[i % m] { x } else { f64::NEG_INFINITY })
            .collect();
        Ok(self.graph.push(
            Tensor::new(s, data)?,
            Op::MaskFill { a: self.id, allowed },
            self.ng(),
        ))
    }

    /// Normalizes each row of the last dimension to zero mean and unit
    /// variance (epsilon 1e-5), then applies `gain` and `bias`.
    pub fn layer_norm(&self, gain: Var<'g>, bias: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(&gain);
        self.same_graph(&bias);
        let x = self.value();
        let gv = gain.value();
        let bv = bias.value();
        let d = x.last_dim();
        if gv.shape() != [d] || bv.shape() != [d] {
            return Err(Error::shape("layer_norm", x.shape(), gv.shape()));
        }
        let rows = x.numel() / d.max(1);
        let mut xhat = vec![0.0; x.numel()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; x.numel()];
        for r in 0..rows {
            let xr = &x.data()[r * d..(r + 1) * d];
            let mean = xr.iter().sum::<f64>() / d as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (xr[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let ng = self.ng() || gain.ng() || bias.ng();
        Ok(self.graph.push(
            Tensor::new(x.shape(), out)?,
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                bias: bias.id,
                xhat,
                rstd,
            },
            ng,
        ))
    }

    /// Inverted dropout: zeroes entries with probability `p` and scales the
    /// survivors by `1/(1-p)`. Identity when `rng` is `None` or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&self, p: f64, rng: Option<&mut R>) -> Result<Var<'g>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("dropout probability {p} not in [0, 1)")));
        }
        let Some(rng) = rng else { return Ok(*self) };
        if p == 0.0 {
            return Ok(*self);
        }
        let a = self.value();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..a.numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = a.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        Ok(self.graph.push(
            Tensor::new(a.shape(), data)?,
            Op::Dropout { a: self.id, mask },
            self.ng(),
        ))
    }

    /// Concatenates along the last dimension; leading dims must agree.
    pub fn concat_last(parts: &[Var<'g>]) -> Result<Var<'g>> {
        let first = parts.first().ok_or_else(|| Error::Domain("concat of nothing".into()))?;
        let g = first.graph;
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let lead = &vals[0].shape()[..vals[0].rank() - 1];
        for v in &vals {
            if &v.shape()[..v.rank() - 1] != lead {
                return Err(Error::shape("concat_last", vals[0].shape(), v.shape()));
            }
        }
        let widths: Vec<usize> = vals.iter().map(|v| v.last_dim()).collect();
        let total: usize = widths.iter().sum();
        let rows = vals[0].numel() / widths[0].max(1);
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (v, &w) in vals.iter().zip(&widths) {
                out.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let ng = parts.iter().any(|p| p.ng());
        Ok(g.push(
            Tensor::new(&shape, out)?,
            Op::ConcatLast(parts.iter().zip(widths).map(|(p, w)| (p.id, w)).collect()),
            ng,
        ))
    }

    /// Concatenates along dim -2 (sequence axis).
    pub fn concat_rows(parts: &[Var<'g>]) -> Result<Var<'g>> {
        let first = parts.first().ok_or_else(|| Error::Domain("concat of nothing".into()))?;
        let g = first.graph;
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let (outer, _, inner) = split_rows(vals[0].shape())
            .ok_or_else(|| Error::shape("concat_rows", vals[0].shape(), &[]))?;
        let mut row_counts = Vec::new();
        for v in &vals {
            match split_rows(v.shape()) {
                Some((o, r, i)) if o == outer && i == inner && v.rank() == vals[0].rank() => row_counts.push(r),
                _ => return Err(Error::shape("concat_rows", vals[0].shape(), v.shape())),
            }
        }
        let total: usize = row_counts.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &r) in vals.iter().zip(&row_counts) {
                out.extend_from_slice(&v.data()[o * r * inner..(o + 1) * r * inner]);
            }
        }
        let mut shape = vals[0].shape().to_vec();
        let rk = shape.len();
        shape[rk - 2] = total;
        let ng = parts.iter().any(|p| p.ng());
        Ok(g.push(
            Tensor::new(&shape, out)?,
            Op::ConcatRows {
                parts: parts.iter().zip(row_counts).map(|(p, r)| (p.id, r)).collect(),
                outer,
                inner,
            },
            ng,
        ))
    }

    /// Rows `start..start+len` of dim -2.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Var<'g>> {
        let a = self.value();
        let (outer, rows_in, inner) =
            split_rows(a.shape()).ok_or_else(|| Error::shape("slice_rows", a.shape(), &[start, len]))?;
        if start + len > rows_in {
            return Err(Error::shape("slice_rows", a.shape(), &[start, len]));
        }
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&a.data()[(o * rows_in + start) * inner..(o * rows_in + start + len) * inner]);
        }
        let mut shape = a.shape().to_vec();
        let rk = shape.len();
        shape[rk - 2] = len;
        Ok(self.graph.push(
            Tensor::new(&shape, out)?,
            Op::SliceRows {
                a: self.id,
                start,
                rows_in,
                len,
                inner,
            },
            self.ng(),
        ))
    }

    /// Columns `start..start+len` of the last dimension.
    pub fn slice_last(&self, start: usize, len: usize) -> Result<Var<'g>> {
        let a = self.value();
        let (rows, width_in) = split_last(a.shape());
        if start + len > width_in {
            return Err(Error::shape("slice_last", a.shape(), &[start, len]));
        }
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&a.data()[r * width_in + start..r * width_in + start + len]);
        }
        let mut shape = a.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        Ok(self.graph.push(
            Tensor::new(&shape, out)?,
            Op::SliceLast {
                a: self.id,
                start,
                width_in,
                len,
            },
            self.ng(),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'g>> {
        let a = self.value();
        let t = (*a).clone().reshape(shape)?;
        Ok(self.graph.push(t, Op::Reshape(self.id), self.ng()))
    }

    /// Repeats the whole tensor `batch` times along a new leading axis.
    pub fn expand(&self, batch: usize) -> Result<Var<'g>> {
        let a = self.value();
        let mut shape = vec![batch];
        shape.extend_from_slice(a.shape());
        let mut out = Vec::with_capacity(batch * a.numel());
        for _ in 0..batch {
            out.extend_from_slice(a.data());
        }
        Ok(self.graph.push(
            Tensor::new(&shape, out)?,
            Op::Expand { a: self.id, batch },
            self.ng(),
        ))
    }

    pub fn sum(&self) -> Var<'g> {
        let a = self.value();
        let s = a.data().iter().sum();
        self.graph.push(Tensor::scalar(s), Op::Sum(self.id), self.ng())
    }

    pub fn mean(&self) -> Var<'g> {
        let n = self.value().numel().max(1);
        self.sum().scale(1.0 / n as f64)
    }
}
