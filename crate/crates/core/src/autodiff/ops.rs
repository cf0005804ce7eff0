use super::tape::{Tape, Value};
use super::as_matrix;
use crate::error::{Error, Result};

/// Pointwise nonlinearities with exact analytic derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Relu,
    LeakyRelu(f64),
    Abs,
    Neg,
}

impl Unary {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Unary::Relu => x.max(0.0),
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Unary::Abs => x.abs(),
            Unary::Neg => -x,
        }
    }
}

pub(crate) enum Op {
    Leaf,
    MatMul { a: Value, b: Value, m: usize, k: usize, n: usize },
    Add { a: Value, b: Value },
    Sub { a: Value, b: Value },
    Mul { a: Value, b: Value },
    Scale { input: Value, factor: f64 },
    Unary { input: Value, kind: Unary },
    Concat { inputs: Vec<Value>, axis: usize },
    SliceCols { input: Value, start: usize },
    GatherRows { input: Value, index: Vec<usize> },
    Reshape { input: Value },
    Sum { input: Value },
    AddBias { input: Value, bias: Value },
    RowScale { input: Value, scale: Value },
    SegmentSoftmax { input: Value, segments: Vec<usize>, count: usize },
    SegmentSum { input: Value, segments: Vec<usize> },
    CrossEntropy { logits: Value, label: usize, probs: Vec<f64> },
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<Value> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => {
                vec![*a, *b]
            }
            Op::AddBias { input, bias: other } | Op::RowScale { input, scale: other } => {
                vec![*input, *other]
            }
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Scale { input, .. }
            | Op::Unary { input, .. }
            | Op::SliceCols { input, .. }
            | Op::GatherRows { input, .. }
            | Op::Reshape { input }
            | Op::Sum { input }
            | Op::SegmentSoftmax { input, .. }
            | Op::SegmentSum { input, .. } => vec![*input],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

impl<'a> Tape<'a> {
    fn dim_err(&self, op: &'static str, a: Value, b: Value) -> Error {
        Error::Dimension {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    /// `[m×k] · [k×n] → [m×n]`.
    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.dim_err("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let orow = &mut out[r * n..(r + 1) * n];
            for p in 0..k {
                let s = ad[r * k + p];
                if s != 0.0 {
                    let brow = &bd[p * n..(p + 1) * n];
                    orow.iter_mut().zip(brow).for_each(|(o, b)| *o += s * b);
                }
            }
        }
        Ok(self.push(out, vec![m, n], Op::MatMul { a, b, m, k, n }))
    }

    fn binary(&mut self, a: Value, b: Value, kind: Binary) -> Result<Value> {
        let (na, nb) = (self.numel(a), self.numel(b));
        let shape = if self.shape(a) == self.shape(b) || nb == 1 {
            self.shape(a).to_vec()
        } else if na == 1 {
            self.shape(b).to_vec()
        } else {
            let name = match kind {
                Binary::Add => "add",
                Binary::Sub => "sub",
                Binary::Mul => "mul",
            };
            return Err(self.dim_err(name, a, b));
        };
        let (ad, bd) = (self.data(a), self.data(b));
        let n = na.max(nb);
        let at = |j: usize| if na == 1 { ad[0] } else { ad[j] };
        let bt = |j: usize| if nb == 1 { bd[0] } else { bd[j] };
        let f: fn(f64, f64) -> f64 = match kind {
            Binary::Add => |x, y| x + y,
            Binary::Sub => |x, y| x - y,
            Binary::Mul => |x, y| x * y,
        };
        let out: Vec<f64> = (0..n).map(|j| f(at(j), bt(j))).collect();
        let op = match kind {
            Binary::Add => Op::Add { a, b },
            Binary::Sub => Op::Sub { a, b },
            Binary::Mul => Op::Mul { a, b },
        };
        Ok(self.push(out, shape, op))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value> {
        self.binary(a, b, Binary::Sub)
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Value, b: Value) -> Result<Value> {
        self.binary(a, b, Binary::Mul)
    }

    pub fn scale(&mut self, x: Value, factor: f64) -> Value {
        let out = self.data(x).iter().map(|v| v * factor).collect();
        let shape = self.shape(x).to_vec();
        self.push(out, shape, Op::Scale { input: x, factor })
    }

    pub fn unary(&mut self, x: Value, kind: Unary) -> Value {
        let out = self.data(x).iter().map(|&v| kind.apply(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(out, shape, Op::Unary { input: x, kind })
    }

    pub fn tanh(&mut self, x: Value) -> Value {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: Value) -> Value {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn relu(&mut self, x: Value) -> Value {
        self.unary(x, Unary::Relu)
    }

    pub fn leaky_relu(&mut self, x: Value, slope: f64) -> Value {
        self.unary(x, Unary::LeakyRelu(slope))
    }

    pub fn abs(&mut self, x: Value) -> Value {
        self.unary(x, Unary::Abs)
    }

    pub fn neg(&mut self, x: Value) -> Value {
        self.unary(x, Unary::Neg)
    }

    /// Concatenate along `axis` (0 = rows, 1 = columns). Rank-1 inputs
    /// only concatenate along axis 0.
    pub fn concat(&mut self, values: &[Value], axis: usize) -> Result<Value> {
        let Some(&first) = values.first() else {
            return Err(Error::invalid("concat", "no inputs"));
        };
        if values.len() == 1 {
            return Ok(first);
        }
        let rank = self.shape(first).len();
        if axis > 1 || (rank == 1 && axis != 0) || rank == 0 || rank > 2 {
            return Err(Error::invalid(
                "concat",
                format!("axis {axis} invalid for rank {rank}"),
            ));
        }
        for &v in &values[1..] {
            let (s0, s) = (self.shape(first), self.shape(v));
            let ok = s.len() == rank && (rank == 1 || s[1 - axis] == s0[1 - axis]);
            if !ok {
                return Err(self.dim_err("concat", first, v));
            }
        }
        let (out, shape) = if rank == 1 {
            let out: Vec<f64> = values.iter().flat_map(|&v| self.data(v).to_vec()).collect();
            let n = out.len();
            (out, vec![n])
        } else if axis == 0 {
            let out: Vec<f64> = values.iter().flat_map(|&v| self.data(v).to_vec()).collect();
            let cols = self.shape(first)[1];
            let rows = out.len() / cols.max(1);
            (out, vec![rows, cols])
        } else {
            let rows = self.shape(first)[0];
            let cols: usize = values.iter().map(|&v| self.shape(v)[1]).sum();
            let mut out = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for &v in values {
                    let c = self.shape(v)[1];
                    out.extend_from_slice(&self.data(v)[r * c..(r + 1) * c]);
                }
            }
            (out, vec![rows, cols])
        };
        Ok(self.push(
            out,
            shape,
            Op::Concat {
                inputs: values.to_vec(),
                axis,
            },
        ))
    }

    /// Columns `start..start+len` of a rank-2 value.
    pub fn slice_cols(&mut self, x: Value, start: usize, len: usize) -> Result<Value> {
        let shape = self.shape(x);
        if shape.len() != 2 || start + len > shape[1] {
            return Err(Error::invalid(
                "slice_cols",
                format!("columns {start}..{} out of range for {shape:?}", start + len),
            ));
        }
        let (rows, cols) = (shape[0], shape[1]);
        let d = self.data(x);
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&d[r * cols + start..r * cols + start + len]);
        }
        Ok(self.push(out, vec![rows, len], Op::SliceCols { input: x, start }))
    }

    /// Rows of a rank-2 value selected by `index` (repeats allowed).
    pub fn gather_rows(&mut self, x: Value, index: &[usize]) -> Result<Value> {
        let shape = self.shape(x);
        if shape.len() != 2 {
            return Err(Error::invalid("gather_rows", format!("rank-2 input required, got {shape:?}")));
        }
        let (rows, cols) = (shape[0], shape[1]);
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(
                "gather_rows",
                format!("row {bad} out of range for {rows} rows"),
            ));
        }
        let d = self.data(x);
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index {
            out.extend_from_slice(&d[i * cols..(i + 1) * cols]);
        }
        Ok(self.push(
            out,
            vec![index.len(), cols],
            Op::GatherRows {
                input: x,
                index: index.to_vec(),
            },
        ))
    }

    pub fn slice_rows(&mut self, x: Value, start: usize, len: usize) -> Result<Value> {
        let index: Vec<usize> = (start..start + len).collect();
        self.gather_rows(x, &index)
    }

    pub fn reshape(&mut self, x: Value, shape: &[usize]) -> Result<Value> {
        if shape.iter().product::<usize>() != self.numel(x) {
            return Err(Error::Dimension {
                op: "reshape",
                left: self.shape(x).to_vec(),
                right: shape.to_vec(),
            });
        }
        let out = self.data(x).to_vec();
        Ok(self.push(out, shape.to_vec(), Op::Reshape { input: x }))
    }

    /// Sum of all entries as a `[1]` value.
    pub fn sum(&mut self, x: Value) -> Value {
        let s = self.data(x).iter().sum();
        self.push(vec![s], vec![1], Op::Sum { input: x })
    }

    pub fn mean(&mut self, x: Value) -> Value {
        let n = self.numel(x) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Adds a length-`c` bias to every row of an `[r×c]` value.
    pub fn add_bias(&mut self, x: Value, bias: Value) -> Result<Value> {
        let (_, cols) = as_matrix(self.shape(x));
        if self.numel(bias) != cols {
            return Err(self.dim_err("add_bias", x, bias));
        }
        let b = self.data(bias);
        let out = self
            .data(x)
            .chunks(cols)
            .flat_map(|row| row.iter().zip(b).map(|(v, b)| v + b))
            .collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(out, shape, Op::AddBias { input: x, bias }))
    }

    /// Multiplies row `r` of an `[r×c]` value by `scale[r]`.
    pub fn row_scale(&mut self, x: Value, scale: Value) -> Result<Value> {
        let (rows, cols) = as_matrix(self.shape(x));
        if self.numel(scale) != rows {
            return Err(self.dim_err("row_scale", x, scale));
        }
        let s = self.data(scale);
        let out = self
            .data(x)
            .chunks(cols.max(1))
            .zip(s)
            .flat_map(|(row, s)| row.iter().map(move |v| v * s))
            .collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(out, shape, Op::RowScale { input: x, scale }))
    }

    /// Softmax of `scores` computed independently within each segment.
    /// `segments[e]` names the segment of entry `e`.
    pub fn segment_softmax(&mut self, scores: Value, segments: &[usize]) -> Result<Value> {
        let n = self.numel(scores);
        if n == 0 {
            return Err(Error::invalid("segment_softmax", "empty input"));
        }
        if segments.len() != n {
            return Err(Error::invalid(
                "segment_softmax",
                format!("{} segment ids for {n} scores", segments.len()),
            ));
        }
        let count = segments.iter().max().map_or(0, |m| m + 1);
        let z = self.data(scores);
        let mut max = vec![f64::NEG_INFINITY; count];
        for (e, &s) in segments.iter().enumerate() {
            max[s] = max[s].max(z[e]);
        }
        let mut out: Vec<f64> = segments.iter().enumerate().map(|(e, &s)| (z[e] - max[s]).exp()).collect();
        let mut total = vec![0.0; count];
        for (e, &s) in segments.iter().enumerate() {
            total[s] += out[e];
        }
        for (e, &s) in segments.iter().enumerate() {
            out[e] /= total[s];
        }
        let shape = self.shape(scores).to_vec();
        Ok(self.push(
            out,
            shape,
            Op::SegmentSoftmax {
                input: scores,
                segments: segments.to_vec(),
                count,
            },
        ))
    }

    /// Row `v` of the result is the sum of the rows of `messages` whose
    /// segment id is `v`; segments with no entries stay zero.
    pub fn segment_sum(&mut self, messages: Value, segments: &[usize], count: usize) -> Result<Value> {
        let shape = self.shape(messages);
        if shape.len() != 2 || shape[0] != segments.len() {
            return Err(Error::invalid(
                "segment_sum",
                format!("{} segment ids for messages of shape {shape:?}", segments.len()),
            ));
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= count) {
            return Err(Error::invalid(
                "segment_sum",
                format!("segment id {bad} out of range for {count} segments"),
            ));
        }
        let cols = shape[1];
        let d = self.data(messages);
        let mut out = vec![0.0; count * cols];
        for (e, &s) in segments.iter().enumerate() {
            out[s * cols..(s + 1) * cols]
                .iter_mut()
                .zip(&d[e * cols..(e + 1) * cols])
                .for_each(|(o, m)| *o += m);
        }
        Ok(self.push(
            out,
            vec![count, cols],
            Op::SegmentSum {
                input: messages,
                segments: segments.to_vec(),
            },
        ))
    }

    /// `-log softmax(logits)[label]` via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Value, label: usize) -> Result<Value> {
        let z = self.data(logits);
        if label >= z.len() {
            return Err(Error::invalid(
                "cross_entropy",
                format!("label {label} out of range for {} classes", z.len()),
            ));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("logits {z:?}")));
        }
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let probs: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
        let loss = lse - z[label];
        Ok(self.push(vec![loss], vec![1], Op::CrossEntropy { logits, label, probs }))
    }

    /// Inner product of two equally sized values as a `[1]` value.
    pub fn dot(&mut self, a: Value, b: Value) -> Result<Value> {
        if self.numel(a) != self.numel(b) {
            return Err(self.dim_err("dot", a, b));
        }
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }
}
