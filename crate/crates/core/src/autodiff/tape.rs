use std::borrow::Cow;

use super::ops::{Op, Unary};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
///
/// Handles are only meaningful for the tape that produced them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Value(pub(crate) usize);

impl Value {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) struct Node<'a> {
    pub(crate) data: Cow<'a, [f64]>,
    pub(crate) shape: Vec<usize>,
    pub(crate) grad: Option<Vec<f64>>,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Operation record in creation order.
///
/// Inputs always precede outputs, so reverse creation order is a valid
/// topological order for the backward sweep. Leaves created with
/// [`Tape::param_ref`] borrow their data, which lets many tapes share one
/// read-only parameter set.
#[derive(Default)]
pub struct Tape<'a> {
    pub(crate) nodes: Vec<Node<'a>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf owning its data.
    pub fn param(&mut self, tensor: Tensor) -> Value {
        self.leaf(Cow::Owned(tensor.data), tensor.shape, true)
    }

    /// Trainable leaf borrowing its data.
    pub fn param_ref(&mut self, tensor: &'a Tensor) -> Value {
        self.leaf(Cow::Borrowed(&tensor.data), tensor.shape.clone(), true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor) -> Value {
        self.leaf(Cow::Owned(tensor.data), tensor.shape, false)
    }

    pub fn scalar(&mut self, x: f64) -> Value {
        self.constant(Tensor::scalar(x))
    }

    fn leaf(&mut self, data: Cow<'a, [f64]>, shape: Vec<usize>, requires_grad: bool) -> Value {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        self.nodes.push(Node {
            data,
            shape,
            grad: None,
            op: Op::Leaf,
            requires_grad,
        });
        Value(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, op: Op) -> Value {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            data: Cow::Owned(data),
            shape,
            grad: None,
            op,
            requires_grad,
        });
        Value(self.nodes.len() - 1)
    }

    pub fn data(&self, v: Value) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Value) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn numel(&self, v: Value) -> usize {
        self.nodes[v.0].data.len()
    }

    pub fn item(&self, v: Value) -> f64 {
        let d = self.data(v);
        assert_eq!(d.len(), 1, "item() on a non-scalar value");
        d[0]
    }

    pub fn tensor(&self, v: Value) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.data(v).to_vec())
    }

    pub fn requires_grad(&self, v: Value) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient, or `None` if no backward pass has reached `v`.
    pub fn grad(&self, v: Value) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Gradient as an owned array; zeros when `v` was never reached.
    pub fn grad_or_zeros(&self, v: Value) -> Vec<f64> {
        self.grad(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.numel(v)])
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Reverse sweep from a scalar `loss`. Gradients are added to whatever
    /// each node already holds.
    pub fn backward(&mut self, loss: Value) -> Result<()> {
        if self.numel(loss) != 1 {
            return Err(Error::invalid(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            let Some(g) = g else { continue };
            if !node.requires_grad {
                continue;
            }
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.data;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                if self.wants(*a) {
                    let bd = self.data(*b);
                    let ga = slot(grads, *a, m * k);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            ga[r * k + p] += dot(grow, brow);
                        }
                    }
                }
                if self.wants(*b) {
                    let ad = self.data(*a);
                    let gb = slot(grads, *b, k * n);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let s = ad[r * k + p];
                            if s != 0.0 {
                                let gbrow = &mut gb[p * n..(p + 1) * n];
                                gbrow.iter_mut().zip(grow).for_each(|(x, y)| *x += s * y);
                            }
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                self.accum_broadcast(*a, g, grads, |gi, _| gi);
                self.accum_broadcast(*b, g, grads, |gi, _| gi);
            }
            Op::Sub { a, b } => {
                self.accum_broadcast(*a, g, grads, |gi, _| gi);
                self.accum_broadcast(*b, g, grads, |gi, _| -gi);
            }
            Op::Mul { a, b } => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                let at = |j: usize| if ad.len() == 1 { ad[0] } else { ad[j] };
                let bt = |j: usize| if bd.len() == 1 { bd[0] } else { bd[j] };
                self.accum_broadcast(*a, g, grads, |gi, j| gi * bt(j));
                self.accum_broadcast(*b, g, grads, |gi, j| gi * at(j));
            }
            Op::Scale { input, factor } => {
                if self.wants(*input) {
                    let gi = slot(grads, *input, g.len());
                    gi.iter_mut().zip(g).for_each(|(x, y)| *x += factor * y);
                }
            }
            Op::Unary { input, kind } => {
                if self.wants(*input) {
                    let x = self.data(*input);
                    let gi = slot(grads, *input, g.len());
                    for j in 0..g.len() {
                        gi[j] += g[j] * kind.derivative(x[j], out[j]);
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let (rows, cols) = super::as_matrix(&node.shape);
                let mut offset = 0;
                for v in inputs {
                    let (r, c) = super::as_matrix(self.shape(*v));
                    let want = self.wants(*v);
                    if *axis == 0 {
                        if want {
                            let gi = slot(grads, *v, r * c);
                            gi.iter_mut()
                                .zip(&g[offset * cols..(offset + r) * cols])
                                .for_each(|(x, y)| *x += y);
                        }
                        offset += r;
                    } else {
                        if want {
                            let gi = slot(grads, *v, r * c);
                            for row in 0..rows {
                                let src = &g[row * cols + offset..row * cols + offset + c];
                                gi[row * c..(row + 1) * c]
                                    .iter_mut()
                                    .zip(src)
                                    .for_each(|(x, y)| *x += y);
                            }
                        }
                        offset += c;
                    }
                }
            }
            Op::SliceCols { input, start } => {
                if self.wants(*input) {
                    let (rows, width) = super::as_matrix(&node.shape);
                    let (_, cols) = super::as_matrix(self.shape(*input));
                    let gi = slot(grads, *input, rows * cols);
                    for r in 0..rows {
                        for c in 0..width {
                            gi[r * cols + start + c] += g[r * width + c];
                        }
                    }
                }
            }
            Op::GatherRows { input, index } => {
                if self.wants(*input) {
                    let (_, cols) = super::as_matrix(&node.shape);
                    let gi = slot(grads, *input, self.numel(*input));
                    for (r, &src) in index.iter().enumerate() {
                        gi[src * cols..(src + 1) * cols]
                            .iter_mut()
                            .zip(&g[r * cols..(r + 1) * cols])
                            .for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Reshape { input } => {
                if self.wants(*input) {
                    let gi = slot(grads, *input, g.len());
                    gi.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
            Op::Sum { input } => {
                if self.wants(*input) {
                    let n = self.numel(*input);
                    let gi = slot(grads, *input, n);
                    gi.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::AddBias { input, bias } => {
                let cols = self.numel(*bias);
                if self.wants(*input) {
                    let gi = slot(grads, *input, g.len());
                    gi.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if self.wants(*bias) {
                    let gb = slot(grads, *bias, cols);
                    for row in g.chunks(cols) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::RowScale { input, scale } => {
                let (rows, cols) = super::as_matrix(&node.shape);
                if self.wants(*input) {
                    let s = self.data(*scale);
                    let gi = slot(grads, *input, rows * cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            gi[r * cols + c] += g[r * cols + c] * s[r];
                        }
                    }
                }
                if self.wants(*scale) {
                    let x = self.data(*input);
                    let gs = slot(grads, *scale, rows);
                    for r in 0..rows {
                        gs[r] += dot(&g[r * cols..(r + 1) * cols], &x[r * cols..(r + 1) * cols]);
                    }
                }
            }
            Op::SegmentSoftmax { input, segments, count } => {
                if self.wants(*input) {
                    // d z_e = y_e (g_e - sum_{f in seg(e)} g_f y_f)
                    let mut inner = vec![0.0; *count];
                    for (e, &s) in segments.iter().enumerate() {
                        inner[s] += g[e] * out[e];
                    }
                    let gi = slot(grads, *input, g.len());
                    for (e, &s) in segments.iter().enumerate() {
                        gi[e] += out[e] * (g[e] - inner[s]);
                    }
                }
            }
            Op::SegmentSum { input, segments } => {
                if self.wants(*input) {
                    let (_, cols) = super::as_matrix(&node.shape);
                    let gi = slot(grads, *input, segments.len() * cols);
                    for (e, &s) in segments.iter().enumerate() {
                        gi[e * cols..(e + 1) * cols]
                            .iter_mut()
                            .zip(&g[s * cols..(s + 1) * cols])
                            .for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                label,
                probs,
            } => {
                if self.wants(*logits) {
                    let gi = slot(grads, *logits, probs.len());
                    for (j, p) in probs.iter().enumerate() {
                        let onehot = if j == *label { 1.0 } else { 0.0 };
                        gi[j] += g[0] * (p - onehot);
                    }
                }
            }
        }
    }

    fn wants(&self, v: Value) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulate `f(g_j, j)` into `v`, summing when `v` is a broadcast scalar.
    fn accum_broadcast(
        &self,
        v: Value,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        f: impl Fn(f64, usize) -> f64,
    ) {
        if !self.wants(v) {
            return;
        }
        let n = self.numel(v);
        let gi = slot(grads, v, n);
        if n == g.len() {
            for j in 0..n {
                gi[j] += f(g[j], j);
            }
        } else {
            gi[0] += (0..g.len()).map(|j| f(g[j], j)).sum::<f64>();
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Value, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Unary {
    /// Derivative given the input `x` and the already computed output `y`.
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Tanh => 1.0 - y * y,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Unary::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::Neg => -1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_is_its_own_gradient_seed() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(3.5));
        t.backward(x).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[1.0]);
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_x() {
        let mut t = Tape::new();
        let x = t.param(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]));
        let sq = t.mul(x, x).unwrap();
        let loss = t.sum(sq);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn repeated_backward_accumulates_until_reset() {
        let mut t = Tape::new();
        let x = t.param(Tensor::new(vec![2], vec![1.0, 2.0]));
        let y = t.tanh(x);
        let loss = t.sum(y);
        t.backward(loss).unwrap();
        let once = t.grad(x).unwrap().to_vec();
        t.backward(loss).unwrap();
        let twice = t.grad(x).unwrap().to_vec();
        for (a, b) in once.iter().zip(&twice) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
        t.zero_grad();
        assert!(t.grad(x).is_none());
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap(), once.as_slice());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let x = t.param(Tensor::new(vec![2], vec![1.0, 2.0]));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(2.0));
        let c = t.constant(Tensor::scalar(5.0));
        let y = t.mul(x, c).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[5.0]);
        assert!(t.grad(c).is_none());
    }

    #[test]
    fn records_are_topologically_ordered() {
        let mut t = Tape::new();
        let a = t.param(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = t.tanh(a);
        let c = t.matmul(a, b).unwrap();
        let d = t.concat(&[b, c], 0).unwrap();
        let _ = t.sum(d);
        for (i, node) in t.nodes.iter().enumerate() {
            assert!(node.op.inputs().iter().all(|v| v.0 < i));
        }
    }
}
