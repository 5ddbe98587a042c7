use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, gemm, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Penalty shape of a [`DeviationTerm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Penalty {
    /// `|u|`, with subgradient 0 at `u = 0`.
    Abs,
    /// `u^2`
    Square,
}

/// One term of a deviation loss: `weight * penalty(scale * x[row, col] - target)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviationTerm {
    pub col: usize,
    pub scale: f64,
    pub target: f64,
    pub weight: f64,
    pub penalty: Penalty,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Affine { w: NodeId, b: NodeId, x: NodeId },
    Tanh(NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Noise(NodeId, Tensor),
    Concat(NodeId, NodeId),
    Mse { pred: NodeId, target: NodeId },
    L1 { inputs: Vec<NodeId>, scale: f64 },
    Deviation { x: NodeId, terms: Vec<DeviationTerm> },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Affine { w, b, x } => vec![*w, *b, *x],
            Op::Tanh(a) | Op::Scale(a, _) | Op::Noise(a, _) => vec![*a],
            Op::Add(a, b) | Op::Concat(a, b) => vec![*a, *b],
            Op::Mse { pred, target } => vec![*pred, *target],
            Op::L1 { inputs, .. } => inputs.clone(),
            Op::Deviation { x, .. } => vec![*x],
        }
    }
}

struct Node<'a> {
    op: Op,
    value: Cow<'a, Tensor>,
}

/// Eagerly evaluated computation tape with reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the tape is acyclic by
/// construction and `backward` walks it in exact reverse. Leaves may borrow
/// their tensors, which lets a graph run over model parameters without
/// copying them.
#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(id.0))
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Cow::Owned(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Leaf that borrows its value instead of copying it.
    pub fn leaf_ref(&mut self, value: &'a Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Cow::Borrowed(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Replaces the value of a leaf. The shape must not change.
    pub fn set_leaf(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        self.check(id)?;
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::UnknownNode(id.0));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_leaf",
                left: node.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        node.value = Cow::Owned(value);
        Ok(())
    }

    /// `x W^T + b`, with `W: [m, n]`, `b: [m]` and `x: [n]` or `[batch, n]`.
    pub fn affine(&mut self, w: NodeId, b: NodeId, x: NodeId) -> Result<NodeId> {
        for id in [w, b, x] {
            self.check(id)?;
        }
        let (wv, bv, xv) = (self.value(w), self.value(b), self.value(x));
        if wv.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "affine (weight must be a matrix)",
                left: wv.shape().to_vec(),
                right: xv.shape().to_vec(),
            });
        }
        if wv.shape()[1] != xv.cols() {
            return Err(Error::ShapeMismatch {
                op: "affine",
                left: wv.shape().to_vec(),
                right: xv.shape().to_vec(),
            });
        }
        if bv.len() != wv.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "affine (bias)",
                left: wv.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let op = Op::Affine { w, b, x };
        let value = self.compute(&op);
        Ok(self.push(op, value))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let op = Op::Tanh(x);
        let value = self.compute(&op);
        Ok(self.push(op, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                left: self.value(a).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        let op = Op::Add(a, b);
        let value = self.compute(&op);
        Ok(self.push(op, value))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        self.check(x)?;
        let op = Op::Scale(x, factor);
        let value = self.compute(&op);
        Ok(self.push(op, value))
    }

    /// Adds an externally drawn noise sample. The gradient passes through
    /// unchanged, so replaying the same sample gives a deterministic graph.
    pub fn add_noise(&mut self, x: NodeId, noise: Tensor) -> Result<NodeId> {
        self.check(x)?;
        if noise.len() != self.value(x).len() {
            return Err(Error::ShapeMismatch {
                op: "add_noise",
                left: self.value(x).shape().to_vec(),
                right: noise.shape().to_vec(),
            });
        }
        let op = Op::Noise(x, noise);
        let value = self.compute(&op);
        Ok(self.push(op, value))
    }

    /// Column-wise concatenation of two row batches.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        if self.value(a).rows() != self.value(b).rows() {
            return Err(Error::ShapeMismatch {
                op: "concat",
                left: self.value(a).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        let op = Op::Concat(a, b);
        let value = self.compute(&op);
        Ok(self.push(op, value))
    }

    /// Mean of squared differences over every element.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        self.check(pred)?;
        self.check(target)?;
        if self.value(pred).len() != self.value(target).len() {
            return Err(Error::ShapeMismatch {
                op: "mse",
                left: self.value(pred).shape().to_vec(),
                right: self.value(target).shape().to_vec(),
            });
        }
        let op = Op::Mse { pred, target };
        let value = self.compute(&op);
        Ok(self.push(op, value))
    }

    /// `scale * sum |x|` over all elements of all inputs.
    pub fn l1(&mut self, inputs: &[NodeId], scale: f64) -> Result<NodeId> {
        for &id in inputs {
            self.check(id)?;
        }
        let op = Op::L1 {
            inputs: inputs.to_vec(),
            scale,
        };
        let value = self.compute(&op);
        Ok(self.push(op, value))
    }

    /// Sum over rows and terms of `weight * penalty(scale * x[row, col] - target)`.
    pub fn deviation(&mut self, x: NodeId, terms: &[DeviationTerm]) -> Result<NodeId> {
        self.check(x)?;
        let cols = self.value(x).cols();
        if let Some(t) = terms.iter().find(|t| t.col >= cols) {
            return Err(Error::ShapeMismatch {
                op: "deviation (column out of range)",
                left: self.value(x).shape().to_vec(),
                right: vec![t.col],
            });
        }
        let op = Op::Deviation {
            x,
            terms: terms.to_vec(),
        };
        let value = self.compute(&op);
        Ok(self.push(op, value))
    }

    fn compute(&self, op: &Op) -> Tensor {
        match op {
            Op::Leaf => unreachable!("leaves carry their own value"),
            Op::Affine { w, b, x } => affine_forward(self.value(*w), self.value(*b), self.value(*x)),
            Op::Tanh(x) => self.value(*x).map(f64::tanh),
            Op::Add(a, b) => {
                let mut out = self.value(*a).clone();
                axpy(1.0, self.value(*b).data(), out.data_mut());
                out
            }
            Op::Scale(x, f) => self.value(*x).map(|v| v * f),
            Op::Noise(x, noise) => {
                let mut out = self.value(*x).clone();
                axpy(1.0, noise.data(), out.data_mut());
                out
            }
            Op::Concat(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (rows, ca, cb) = (av.rows(), av.cols(), bv.cols());
                let mut data = Vec::with_capacity(rows * (ca + cb));
                for r in 0..rows {
                    data.extend_from_slice(av.row(r));
                    data.extend_from_slice(bv.row(r));
                }
                let shape = if av.shape().len() <= 1 && bv.shape().len() <= 1 {
                    vec![ca + cb]
                } else {
                    vec![rows, ca + cb]
                };
                Tensor::new(shape, data).expect("concat shape")
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                let sum: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
                Tensor::scalar(sum / p.len().max(1) as f64)
            }
            Op::L1 { inputs, scale } => {
                let sum: f64 = inputs.iter().map(|&id| self.value(id).l1_norm()).sum();
                Tensor::scalar(scale * sum)
            }
            Op::Deviation { x, terms } => {
                let xv = self.value(*x);
                let mut sum = 0.0;
                for r in 0..xv.rows() {
                    let row = xv.row(r);
                    for t in terms {
                        let u = t.scale * row[t.col] - t.target;
                        sum += t.weight
                            * match t.penalty {
                                Penalty::Abs => u.abs(),
                                Penalty::Square => u * u,
                            };
                    }
                }
                Tensor::scalar(sum)
            }
        }
    }

    /// Re-evaluates every non-leaf node in recording order, e.g. after
    /// [`Graph::set_leaf`].
    pub fn recompute(&mut self) {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = self.compute(&self.nodes[i].op);
            self.nodes[i].value = Cow::Owned(value);
        }
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// Only nodes on a path from a requested node to `output` are visited,
    /// so asking for a latent gradient never pays for weight gradients.
    pub fn backward(&self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<Tensor>> {
        self.check(output)?;
        for &id in wrt {
            self.check(id)?;
        }
        let out_value = self.value(output);
        if out_value.len() != 1 {
            return Err(Error::NonScalarOutput(out_value.shape().to_vec()));
        }

        let n = output.0 + 1;
        let mut needed = vec![false; n];
        for &id in wrt {
            if id.0 < n {
                needed[id.0] = true;
            }
        }
        for i in 0..n {
            if !needed[i] && self.nodes[i].op.inputs().iter().any(|p| needed[p.0]) {
                needed[i] = true;
            }
        }

        let mut wanted = vec![false; n];
        for &id in wrt {
            if id.0 < n {
                wanted[id.0] = true;
            }
        }
        let mut kept: Vec<Option<Tensor>> = vec![None; n];
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        if needed[output.0] {
            grads[output.0] = Some(Tensor::new(out_value.shape().to_vec(), vec![1.0])?);
        }

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            if wanted[i] {
                kept[i] = Some(g.clone());
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Affine { w, b, x } => {
                    let (wv, xv) = (self.value(*w), self.value(*x));
                    let (m, ncols) = (wv.shape()[0], wv.shape()[1]);
                    let batch = xv.rows();
                    let gd = g.data();
                    if needed[x.0] {
                        let mut dx = vec![0.0; batch * ncols];
                        if batch == 1 {
                            for (j, gj) in gd.iter().enumerate() {
                                axpy(*gj, &wv.data()[j * ncols..(j + 1) * ncols], &mut dx);
                            }
                        } else {
                            gemm(batch, m, ncols, gd, m as isize, 1, wv.data(), ncols as isize, 1, &mut dx, false);
                        }
                        accumulate(&mut grads, *x, xv.shape(), dx);
                    }
                    if needed[w.0] {
                        let mut dw = vec![0.0; m * ncols];
                        if batch == 1 {
                            for (j, gj) in gd.iter().enumerate() {
                                axpy(*gj, xv.data(), &mut dw[j * ncols..(j + 1) * ncols]);
                            }
                        } else {
                            gemm(m, batch, ncols, gd, 1, m as isize, xv.data(), ncols as isize, 1, &mut dw, false);
                        }
                        accumulate(&mut grads, *w, wv.shape(), dw);
                    }
                    if needed[b.0] {
                        let mut db = vec![0.0; m];
                        for r in 0..batch {
                            axpy(1.0, &gd[r * m..(r + 1) * m], &mut db);
                        }
                        accumulate(&mut grads, *b, self.value(*b).shape(), db);
                    }
                }
                Op::Tanh(x) => {
                    if needed[x.0] {
                        let y = node.value.data();
                        let dx = g.data().iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect();
                        accumulate(&mut grads, *x, self.value(*x).shape(), dx);
                    }
                }
                Op::Add(a, b) => {
                    if needed[a.0] {
                        accumulate(&mut grads, *a, self.value(*a).shape(), g.data().to_vec());
                    }
                    if needed[b.0] {
                        accumulate(&mut grads, *b, self.value(*b).shape(), g.data().to_vec());
                    }
                }
                Op::Scale(x, f) => {
                    if needed[x.0] {
                        let dx = g.data().iter().map(|v| v * f).collect();
                        accumulate(&mut grads, *x, self.value(*x).shape(), dx);
                    }
                }
                Op::Noise(x, _) => {
                    if needed[x.0] {
                        accumulate(&mut grads, *x, self.value(*x).shape(), g.into_data());
                    }
                }
                Op::Concat(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (rows, ca, cb) = (av.rows(), av.cols(), bv.cols());
                    let gd = g.data();
                    if needed[a.0] {
                        let mut da = Vec::with_capacity(rows * ca);
                        for r in 0..rows {
                            da.extend_from_slice(&gd[r * (ca + cb)..r * (ca + cb) + ca]);
                        }
                        accumulate(&mut grads, *a, av.shape(), da);
                    }
                    if needed[b.0] {
                        let mut db = Vec::with_capacity(rows * cb);
                        for r in 0..rows {
                            db.extend_from_slice(&gd[r * (ca + cb) + ca..(r + 1) * (ca + cb)]);
                        }
                        accumulate(&mut grads, *b, bv.shape(), db);
                    }
                }
                Op::Mse { pred, target } => {
                    let (p, t) = (self.value(*pred), self.value(*target));
                    let k = 2.0 * g.item() / p.len().max(1) as f64;
                    let diff: Vec<f64> = p.data().iter().zip(t.data()).map(|(a, b)| k * (a - b)).collect();
                    if needed[target.0] {
                        let neg = diff.iter().map(|v| -v).collect();
                        accumulate(&mut grads, *target, t.shape(), neg);
                    }
                    if needed[pred.0] {
                        accumulate(&mut grads, *pred, p.shape(), diff);
                    }
                }
                Op::L1 { inputs, scale } => {
                    let k = scale * g.item();
                    for &id in inputs {
                        if needed[id.0] {
                            let v = self.value(id);
                            let dx = v.data().iter().map(|&x| k * sign(x)).collect();
                            accumulate(&mut grads, id, v.shape(), dx);
                        }
                    }
                }
                Op::Deviation { x, terms } => {
                    if needed[x.0] {
                        let xv = self.value(*x);
                        let cols = xv.cols();
                        let gs = g.item();
                        let mut dx = vec![0.0; xv.len()];
                        for r in 0..xv.rows() {
                            let row = xv.row(r);
                            for t in terms {
                                let u = t.scale * row[t.col] - t.target;
                                let du = match t.penalty {
                                    Penalty::Abs => sign(u),
                                    Penalty::Square => 2.0 * u,
                                };
                                dx[r * cols + t.col] += gs * t.weight * du * t.scale;
                            }
                        }
                        accumulate(&mut grads, *x, xv.shape(), dx);
                    }
                }
            }
        }

        Ok(wrt
            .iter()
            .map(|&id| {
                let shape = self.value(id).shape();
                match kept.get(id.0).and_then(|g| g.as_ref()) {
                    Some(g) => g.clone(),
                    None => Tensor::zeros(shape),
                }
            })
            .collect())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, shape: &[usize], data: Vec<f64>) {
    match &mut grads[id.0] {
        Some(existing) => axpy(1.0, &data, existing.data_mut()),
        slot @ None => *slot = Some(Tensor::new(shape.to_vec(), data).expect("gradient shape")),
    }
}

fn affine_forward(w: &Tensor, b: &Tensor, x: &Tensor) -> Tensor {
    let (m, n) = (w.shape()[0], w.shape()[1]);
    let batch = x.rows();
    let mut out = vec![0.0; batch * m];
    if batch == 1 {
        let xd = x.data();
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&w.data()[i * n..(i + 1) * n], xd) + b.data()[i];
        }
    } else {
        gemm(batch, n, m, x.data(), n as isize, 1, w.data(), 1, n as isize, &mut out, false);
        for r in 0..batch {
            axpy(1.0, b.data(), &mut out[r * m..(r + 1) * m]);
        }
    }
    let shape = if x.shape().len() <= 1 { vec![m] } else { vec![batch, m] };
    Tensor::new(shape, out).expect("affine shape")
}

/// Stand-alone `W x + b` on plain tensors.
pub fn forward_affine(w: &Tensor, b: &Tensor, x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let (wi, bi, xi) = (g.leaf_ref(w), g.leaf_ref(b), g.leaf_ref(x));
    let y = g.affine(wi, bi, xi)?;
    Ok(g.value(y).clone())
}
