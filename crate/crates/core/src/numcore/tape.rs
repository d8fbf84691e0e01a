//! Reverse-mode differentiation over a linear recording of operations.
//!
//! A [`Tape`] owns every intermediate value. Operations append a node and
//! return a [`Var`] handle; [`Tape::backward`] walks the record in reverse and
//! accumulates gradients for every node that depends on a leaf created with
//! [`Tape::param`]. Tapes are single-use and not shared across threads.

use super::scalar::{matmul, Scalar};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use std::hash::{Hash, Hasher};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Relu {
        x: Var,
    },
    Unfold {
        x: Var,
        kernel: usize,
    },
    GraphMix {
        x: Var,
        adj: Vec<T>,
        nodes: usize,
    },
    GroupMax {
        x: Var,
        argmax: Vec<usize>,
    },
    L2Normalize {
        x: Var,
        norms: Vec<T>,
    },
    Sum {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: T,
    },
    /// Scalar-valued function whose local gradients were computed eagerly.
    ScalarFn {
        inputs: Vec<Var>,
        local: Vec<Vec<T>>,
        signature: u64,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `x[..., k] * w[k, n] (+ b[n])`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 2 || *xs.last().unwrap() != ws[0] {
            return Err(Error::ShapeMismatch(format!("linear: input {xs:?} with weight {ws:?}")));
        }
        let (k, n) = (ws[0], ws[1]);
        if let Some(b) = b {
            if self.value(b).len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "linear: bias {:?} for {n} outputs",
                    self.value(b).shape()
                )));
            }
        }
        let rows = self.value(x).len() / k;
        let mut out = matmul(self.value(x).data(), self.value(w).data(), rows, k, n);
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_exact_mut(n) {
                for (o, &bb) in row.iter_mut().zip(bias) {
                    *o = *o + bb;
                }
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = n;
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Tensor::new(shape, out)?, Op::Linear { x, w, b }, needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a.max(T::zero())).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(t, Op::Relu { x }, needs)
    }

    /// `[B, S, T, C] -> [B, S, T-K+1, K*C]`; output feature `j*C + c` holds
    /// input frame `t + j`, channel `c`.
    pub fn unfold(&mut self, x: Var, kernel: usize) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 4 {
            return Err(Error::ShapeMismatch(format!("unfold expects rank 4, got {s:?}")));
        }
        let (b, n, t, c) = (s[0], s[1], s[2], s[3]);
        if kernel == 0 || t < kernel {
            return Err(Error::WindowTooShort { len: t, kernel });
        }
        let to = t - kernel + 1;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(b * n * to * kernel * c);
        for bs in 0..b * n {
            let base = bs * t * c;
            for ti in 0..to {
                out.extend_from_slice(&src[base + ti * c..base + (ti + kernel) * c]);
            }
        }
        let needs = self.needs(x);
        Ok(self.push(
            Tensor::new(vec![b, n, to, kernel * c], out)?,
            Op::Unfold { x, kernel },
            needs,
        ))
    }

    /// Mix node features with a fixed `S x S` matrix: `out[b, s] = sum_r A[s, r] x[b, r]`.
    pub fn graph_mix(&mut self, x: Var, adj: &[T], nodes: usize) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        if s.len() < 2 || s[1] != nodes || adj.len() != nodes * nodes {
            return Err(Error::ShapeMismatch(format!(
                "graph mix: input {s:?} with {nodes}-node adjacency"
            )));
        }
        let per_node: usize = s[2..].iter().product();
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        let stride = nodes * per_node;
        for (o, i) in out.chunks_exact_mut(stride).zip(src.chunks_exact(stride)) {
            T::gemm(
                nodes,
                nodes,
                per_node,
                T::one(),
                adj,
                nodes as isize,
                1,
                i,
                per_node as isize,
                1,
                T::zero(),
                o,
                per_node as isize,
                1,
            );
        }
        let needs = self.needs(x);
        Ok(self.push(
            Tensor::new(s, out)?,
            Op::GraphMix {
                x,
                adj: adj.to_vec(),
                nodes,
            },
            needs,
        ))
    }

    /// Max over node groups: `[B, S, ...] -> [B, G, ...]`.
    pub fn group_max(&mut self, x: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        if s.len() < 2 {
            return Err(Error::ShapeMismatch(format!("group max on {s:?}")));
        }
        let nodes = s[1];
        if groups.iter().flatten().any(|&n| n >= nodes) || groups.iter().any(Vec::is_empty) {
            return Err(Error::ShapeMismatch(format!(
                "group max: groups {groups:?} for {nodes} nodes"
            )));
        }
        let per_node: usize = s[2..].iter().product();
        let g = groups.len();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(s[0] * g * per_node);
        let mut argmax = Vec::with_capacity(out.capacity());
        for b in 0..s[0] {
            for group in groups {
                for e in 0..per_node {
                    let mut best = (b * nodes + group[0]) * per_node + e;
                    for &n in &group[1..] {
                        let idx = (b * nodes + n) * per_node + e;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let mut shape = s;
        shape[1] = g;
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::GroupMax { x, argmax }, needs))
    }

    /// Rows over the last dimension scaled to unit norm; `x / max(|x|, eps)`.
    pub fn l2_normalize(&mut self, x: Var, eps: T) -> Var {
        let v = self.value(x);
        let d = *v.shape().last().unwrap();
        let mut out = v.data().to_vec();
        let mut norms = Vec::with_capacity(out.len() / d);
        for row in out.chunks_exact_mut(d) {
            let n = row.iter().map(|&a| a * a).sum::<T>().sqrt();
            let n = if n > eps { n } else { eps };
            for a in row.iter_mut() {
                *a = *a / n;
            }
            norms.push(n);
        }
        let t = Tensor::new(v.shape().to_vec(), out).expect("same shape");
        let needs = self.needs(x);
        self.push(t, Op::L2Normalize { x, norms }, needs)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch(format!("add {:?} + {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add { a, b }, needs))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a * factor).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(t, Op::Scale { x, factor }, needs)
    }

    /// Record a scalar function of `inputs` given its value and the gradient
    /// of that value with respect to each input (same lengths as the inputs).
    /// `signature` identifies the smooth piece the evaluation fell on.
    pub fn scalar_fn(&mut self, inputs: Vec<Var>, value: T, local: Vec<Vec<T>>, signature: u64) -> Result<Var> {
        if inputs.len() != local.len() || inputs.iter().zip(&local).any(|(v, g)| self.value(*v).len() != g.len()) {
            return Err(Error::ShapeMismatch("scalar fn gradients".into()));
        }
        let needs = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(
            Tensor::scalar(value),
            Op::ScalarFn {
                inputs,
                local,
                signature,
            },
            needs,
        ))
    }

    /// Hash of every branch decision taken while recording (ReLU masks, max
    /// selections, norm clamps). Two evaluations with equal signatures lie on
    /// the same smooth piece of the function.
    pub fn branch_signature(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Relu { .. } => {
                    i.hash(&mut h);
                    for a in node.value.data() {
                        (*a > T::zero()).hash(&mut h);
                    }
                }
                Op::GroupMax { argmax, .. } => {
                    i.hash(&mut h);
                    argmax.hash(&mut h);
                }
                Op::L2Normalize { x, norms } => {
                    i.hash(&mut h);
                    let d = *self.nodes[x.0].value.shape().last().unwrap();
                    for (row, n) in self.nodes[x.0].value.data().chunks_exact(d).zip(norms) {
                        let raw = row.iter().map(|&a| a * a).sum::<T>().sqrt();
                        (raw == *n).hash(&mut h);
                    }
                }
                Op::ScalarFn { signature, .. } => {
                    i.hash(&mut h);
                    signature.hash(&mut h);
                }
                _ => {}
            }
        }
        h.finish()
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::BackwardNonScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Linear { x, w, b } => {
                    let ws = self.value(*w).shape();
                    let (k, n) = (ws[0], ws[1]);
                    let xv = self.value(*x).data();
                    let rows = xv.len() / k;
                    if self.needs(*x) {
                        let acc = slot(&mut grads, *x, xv.len());
                        // dx = g * W^T
                        T::gemm(
                            rows,
                            n,
                            k,
                            T::one(),
                            &g,
                            n as isize,
                            1,
                            self.value(*w).data(),
                            1,
                            n as isize,
                            T::one(),
                            acc,
                            k as isize,
                            1,
                        );
                    }
                    if self.needs(*w) {
                        let acc = slot(&mut grads, *w, k * n);
                        // dW = x^T * g
                        T::gemm(
                            k,
                            rows,
                            n,
                            T::one(),
                            xv,
                            1,
                            k as isize,
                            &g,
                            n as isize,
                            1,
                            T::one(),
                            acc,
                            n as isize,
                            1,
                        );
                    }
                    if let Some(b) = b {
                        if self.needs(*b) {
                            let acc = slot(&mut grads, *b, n);
                            for row in g.chunks_exact(n) {
                                for (a, &r) in acc.iter_mut().zip(row) {
                                    *a = *a + r;
                                }
                            }
                        }
                    }
                }
                Op::Relu { x } => {
                    let xv = self.value(*x).data();
                    let acc = slot(&mut grads, *x, xv.len());
                    for ((a, &gi), &xi) in acc.iter_mut().zip(&g).zip(xv) {
                        if xi > T::zero() {
                            *a = *a + gi;
                        }
                    }
                }
                Op::Unfold { x, kernel } => {
                    let s = self.value(*x).shape();
                    let (t, c) = (s[2], s[3]);
                    let to = t - kernel + 1;
                    let row = kernel * c;
                    let acc = slot(&mut grads, *x, s.iter().product());
                    for (bs, gblock) in g.chunks_exact(to * row).enumerate() {
                        let base = bs * t * c;
                        for (ti, grow) in gblock.chunks_exact(row).enumerate() {
                            let dst = &mut acc[base + ti * c..base + ti * c + row];
                            for (a, &gi) in dst.iter_mut().zip(grow) {
                                *a = *a + gi;
                            }
                        }
                    }
                }
                Op::GraphMix { x, adj, nodes } => {
                    let s = self.value(*x).shape();
                    let per_node: usize = s[2..].iter().product();
                    let stride = nodes * per_node;
                    let acc = slot(&mut grads, *x, g.len());
                    for (a, gi) in acc.chunks_exact_mut(stride).zip(g.chunks_exact(stride)) {
                        // dx = A^T g
                        T::gemm(
                            *nodes,
                            *nodes,
                            per_node,
                            T::one(),
                            adj,
                            1,
                            *nodes as isize,
                            gi,
                            per_node as isize,
                            1,
                            T::one(),
                            a,
                            per_node as isize,
                            1,
                        );
                    }
                }
                Op::GroupMax { x, argmax } => {
                    let acc = slot(&mut grads, *x, self.value(*x).len());
                    for (&src, &gi) in argmax.iter().zip(&g) {
                        acc[src] = acc[src] + gi;
                    }
                }
                Op::L2Normalize { x, norms } => {
                    let xv = self.value(*x).data();
                    let z = node.value.data();
                    let d = xv.len() / norms.len();
                    let acc = slot(&mut grads, *x, xv.len());
                    for (r, &n) in norms.iter().enumerate() {
                        let sl = r * d..(r + 1) * d;
                        let (zr, gr) = (&z[sl.clone()], &g[sl.clone()]);
                        let raw = xv[sl.clone()].iter().map(|&a| a * a).sum::<T>().sqrt();
                        let clamped = raw != n;
                        let dot: T = zr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for ((a, &zi), &gi) in acc[sl].iter_mut().zip(zr).zip(gr) {
                            let v = if clamped { gi } else { gi - zi * dot };
                            *a = *a + v / n;
                        }
                    }
                }
                Op::Sum { x } => {
                    let acc = slot(&mut grads, *x, self.value(*x).len());
                    for a in acc.iter_mut() {
                        *a = *a + g[0];
                    }
                }
                Op::Add { a, b } => {
                    for v in [*a, *b] {
                        if self.needs(v) {
                            let acc = slot(&mut grads, v, g.len());
                            for (s, &gi) in acc.iter_mut().zip(&g) {
                                *s = *s + gi;
                            }
                        }
                    }
                }
                Op::Scale { x, factor } => {
                    let acc = slot(&mut grads, *x, g.len());
                    for (s, &gi) in acc.iter_mut().zip(&g) {
                        *s = *s + gi * *factor;
                    }
                }
                Op::ScalarFn { inputs, local, .. } => {
                    for (v, lg) in inputs.iter().zip(local) {
                        if self.needs(*v) {
                            let acc = slot(&mut grads, *v, lg.len());
                            for (s, &l) in acc.iter_mut().zip(lg) {
                                *s = *s + l * g[0];
                            }
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}
