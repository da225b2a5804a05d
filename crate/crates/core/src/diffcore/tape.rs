use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DiffError, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Linear => v,
        }
    }

    #[inline]
    fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// `out = b + W x`, with `wt` the input-major weight (`wt[j * out + i]`).
///
/// Each output accumulates `b[i] + w[0,i] x[0] + w[1,i] x[1] + ...` strictly
/// left to right, so any evaluator following the same order reproduces it
/// bit for bit.
#[inline]
pub fn affine_kernel(wt: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_out = b.len();
    debug_assert_eq!(wt.len(), x.len() * n_out);
    debug_assert_eq!(out.len(), n_out);
    out.copy_from_slice(b);
    for (row, &xj) in wt.chunks_exact(n_out).zip(x) {
        for (o, &w) in out.iter_mut().zip(row) {
            *o += w * xj;
        }
    }
}

/// Inverted dropout outside of a tape: identity at inference or `rate == 0`.
pub fn dropout<R: Rng + ?Sized>(input: &[f64], rate: f64, training: bool, rng: &mut R) -> Result<Vec<f64>, DiffError> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(input.to_vec());
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(input
        .iter()
        .map(|&v| if rng.random::<f64>() < rate { 0.0 } else { v * keep })
        .collect())
}

fn check_rate(rate: f64) -> Result<(), DiffError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(DiffError::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug)]
enum Op {
    Input,
    Affine { weight: ParamId, bias: ParamId, input: NodeId },
    Activate { kind: Activation, input: NodeId },
    Dropout { input: NodeId, mask_start: usize },
    Sum { input: NodeId },
    Scale { input: NodeId, factor: f64 },
    SquaredError { input: NodeId, target_start: usize },
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    start: usize,
    len: usize,
}

/// Record of one forward evaluation, replayable in reverse.
///
/// Buffers are kept across [`Tape::clear`] so a training loop reuses one tape
/// per sample without reallocating.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
    aux: Vec<f64>,
    adjoints: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.values.clear();
        self.aux.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &[f64] {
        let n = &self.nodes[node.0];
        &self.values[n.start..n.start + n.len]
    }

    fn node(&self, id: NodeId) -> Result<Node, DiffError> {
        self.nodes.get(id.0).copied().ok_or(DiffError::UnknownNode(id.0))
    }

    fn push(&mut self, op: Op, len: usize) -> (NodeId, usize) {
        let start = self.values.len();
        self.values.resize(start + len, 0.0);
        self.nodes.push(Node { op, start, len });
        (NodeId(self.nodes.len() - 1), start)
    }

    pub fn input(&mut self, values: &[f64]) -> NodeId {
        let (id, start) = self.push(Op::Input, values.len());
        self.values[start..].copy_from_slice(values);
        id
    }

    pub fn affine(&mut self, store: &ParamStore, weight: ParamId, bias: ParamId, input: NodeId) -> Result<NodeId, DiffError> {
        let inp = self.node(input)?;
        let b = store.value(bias);
        let wt = store.value(weight);
        let n_out = b.len();
        if wt.len() != inp.len * n_out {
            return Err(DiffError::Shape { op: "affine", expected: wt.len() / n_out.max(1), got: inp.len });
        }
        let (id, start) = self.push(Op::Affine { weight, bias, input }, n_out);
        let (head, tail) = self.values.split_at_mut(start);
        affine_kernel(wt, b, &head[inp.start..inp.start + inp.len], tail);
        Ok(id)
    }

    pub fn activation(&mut self, kind: Activation, input: NodeId) -> Result<NodeId, DiffError> {
        let inp = self.node(input)?;
        let (id, start) = self.push(Op::Activate { kind, input }, inp.len);
        let (head, tail) = self.values.split_at_mut(start);
        for (o, &v) in tail.iter_mut().zip(&head[inp.start..inp.start + inp.len]) {
            *o = kind.apply(v);
        }
        Ok(id)
    }

    /// Inverted dropout. At inference or zero rate the input node is returned unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, input: NodeId, rate: f64, training: bool, rng: &mut R) -> Result<NodeId, DiffError> {
        check_rate(rate)?;
        let inp = self.node(input)?;
        if !training || rate == 0.0 {
            return Ok(input);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask_start = self.aux.len();
        for _ in 0..inp.len {
            let m = if rng.random::<f64>() < rate { 0.0 } else { keep };
            self.aux.push(m);
        }
        let (id, start) = self.push(Op::Dropout { input, mask_start }, inp.len);
        let (head, tail) = self.values.split_at_mut(start);
        let src = &head[inp.start..inp.start + inp.len];
        for ((o, &v), &m) in tail.iter_mut().zip(src).zip(&self.aux[mask_start..]) {
            *o = v * m;
        }
        Ok(id)
    }

    pub fn sum(&mut self, input: NodeId) -> Result<NodeId, DiffError> {
        let inp = self.node(input)?;
        let total: f64 = self.values[inp.start..inp.start + inp.len].iter().sum();
        let (id, start) = self.push(Op::Sum { input }, 1);
        self.values[start] = total;
        Ok(id)
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> Result<NodeId, DiffError> {
        let inp = self.node(input)?;
        let (id, start) = self.push(Op::Scale { input, factor }, inp.len);
        let (head, tail) = self.values.split_at_mut(start);
        for (o, &v) in tail.iter_mut().zip(&head[inp.start..inp.start + inp.len]) {
            *o = v * factor;
        }
        Ok(id)
    }

    /// Scalar `sum_i (input_i - target_i)^2`.
    pub fn squared_error(&mut self, input: NodeId, target: &[f64]) -> Result<NodeId, DiffError> {
        let inp = self.node(input)?;
        if target.len() != inp.len {
            return Err(DiffError::Shape { op: "squared_error", expected: inp.len, got: target.len() });
        }
        let target_start = self.aux.len();
        self.aux.extend_from_slice(target);
        let total: f64 = self.values[inp.start..inp.start + inp.len]
            .iter()
            .zip(target)
            .map(|(v, t)| (v - t) * (v - t))
            .sum();
        let (id, start) = self.push(Op::SquaredError { input, target_start }, 1);
        self.values[start] = total;
        Ok(id)
    }

    /// Accumulates `d loss / d param` into `store` for every parameter on the
    /// tape. Gradients already in the store are added to, not replaced.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore) -> Result<(), DiffError> {
        if self.nodes.is_empty() {
            return Err(DiffError::EmptyTape);
        }
        let loss_node = self.node(loss)?;
        if loss_node.len != 1 {
            return Err(DiffError::NonScalarLoss(loss_node.len));
        }
        let end = loss_node.start + 1;
        self.adjoints.clear();
        self.adjoints.resize(end, 0.0);
        self.adjoints[loss_node.start] = 1.0;

        for idx in (0..=loss.0).rev() {
            let node = self.nodes[idx];
            let (lo, hi) = (node.start, node.start + node.len);
            match node.op {
                Op::Input => {}
                Op::Affine { weight, bias, input } => {
                    let inp = self.nodes[input.0];
                    let (adj_head, adj_tail) = self.adjoints.split_at_mut(lo);
                    let g = &adj_tail[..node.len];
                    if g.iter().all(|&v| v == 0.0) {
                        // still participates: mark so the optimizer sees it
                        store.grad_mut(weight);
                        store.grad_mut(bias);
                        continue;
                    }
                    let x = &self.values[inp.start..inp.start + inp.len];
                    for (db, &gi) in store.grad_mut(bias).iter_mut().zip(g) {
                        *db += gi;
                    }
                    let n_out = node.len;
                    {
                        let dwt = store.grad_mut(weight);
                        for (row, &xj) in dwt.chunks_exact_mut(n_out).zip(x) {
                            if xj == 0.0 {
                                continue;
                            }
                            for (d, &gi) in row.iter_mut().zip(g) {
                                *d += gi * xj;
                            }
                        }
                    }
                    let wt = store.value(weight);
                    let dx = &mut adj_head[inp.start..inp.start + inp.len];
                    for (d, row) in dx.iter_mut().zip(wt.chunks_exact(n_out)) {
                        *d += dot(row, g);
                    }
                }
                Op::Activate { kind, input } => {
                    let inp = self.nodes[input.0];
                    let (adj_head, adj_tail) = self.adjoints.split_at_mut(lo);
                    let x = &self.values[inp.start..inp.start + inp.len];
                    for ((d, &gi), &xv) in adj_head[inp.start..inp.start + inp.len].iter_mut().zip(&adj_tail[..node.len]).zip(x) {
                        *d += gi * kind.derivative(xv);
                    }
                }
                Op::Dropout { input, mask_start } => {
                    let inp = self.nodes[input.0];
                    let (adj_head, adj_tail) = self.adjoints.split_at_mut(lo);
                    let mask = &self.aux[mask_start..mask_start + node.len];
                    for ((d, &gi), &m) in adj_head[inp.start..inp.start + inp.len].iter_mut().zip(&adj_tail[..node.len]).zip(mask) {
                        *d += gi * m;
                    }
                }
                Op::Sum { input } => {
                    let inp = self.nodes[input.0];
                    let g = self.adjoints[lo];
                    for d in &mut self.adjoints[inp.start..inp.start + inp.len] {
                        *d += g;
                    }
                }
                Op::Scale { input, factor } => {
                    let inp = self.nodes[input.0];
                    let (adj_head, adj_tail) = self.adjoints.split_at_mut(lo);
                    for (d, &gi) in adj_head[inp.start..inp.start + inp.len].iter_mut().zip(&adj_tail[..node.len]) {
                        *d += gi * factor;
                    }
                }
                Op::SquaredError { input, target_start } => {
                    let inp = self.nodes[input.0];
                    let g = self.adjoints[lo];
                    let target = &self.aux[target_start..target_start + inp.len];
                    let x = &self.values[inp.start..inp.start + inp.len];
                    for ((d, &xv), &t) in self.adjoints[inp.start..inp.start + inp.len].iter_mut().zip(x).zip(target) {
                        *d += 2.0 * (xv - t) * g;
                    }
                }
            }
            debug_assert!(hi <= end);
        }
        Ok(())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four lanes so the reduction is not latency bound
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4 * 4;
    for (ca, cb) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in a[chunks..].iter().zip(&b[chunks..]) {
        total += x * y;
    }
    total
}
