//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] records every operation in creation order; each result is a
//! [`Value`] handle into that tape. Calling [`Tape::backward`] on a scalar
//! walks the records in reverse and accumulates gradients into every node
//! that (transitively) depends on a leaf created with [`Tape::param`].
//!
//! Gradients accumulate across `backward` calls until [`Tape::zero_grad`].
//!
//! Only the primitives the matching model needs are provided. Binary
//! elementwise ops accept identical shapes or a single-element operand;
//! there is no general broadcasting.

mod gradcheck;
mod ops;
mod tape;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, GroupError};
pub use ops::Unary;
pub use tape::{Tape, Value};

use serde::{Deserialize, Serialize};

/// Dense row-major array with an explicit shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn scalar(x: f64) -> Self {
        Tensor::new(vec![1], vec![x])
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows and columns of a rank-2 tensor; a rank-1 tensor is one row.
    pub fn dims(&self) -> (usize, usize) {
        as_matrix(&self.shape)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (_, cols) = self.dims();
        &self.data[i * cols..(i + 1) * cols]
    }
}

pub(crate) fn as_matrix(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => {
            let c = *shape.last().unwrap();
            (shape.iter().product::<usize>() / c.max(1), c)
        }
    }
}
