//! Flat row-major f64 tensor.

use crate::error::{Error, Result};
use crate::util::hash_f64s;

/// An n-dimensional value container: a shape plus a flat row-major buffer.
///
/// Invariant: `shape.iter().product() == data.len()`. Constructors enforce
/// it; code touching the public fields directly must preserve it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("{expected} values for shape {shape:?}"),
                format!("{}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// 1-d tensor from a value list.
    pub fn vector(values: &[f64]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Count of entries that are not exactly 0.0.
    pub fn l0(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn l2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Hash of the exact bit patterns; two tensors hash equal iff their
    /// shapes and every bit of every value agree.
    pub fn content_hash(&self) -> u64 {
        let shape_f: Vec<f64> = self.shape.iter().map(|&s| s as f64).collect();
        hash_f64s(&shape_f) ^ hash_f64s(&self.data).rotate_left(1)
    }
}

/// Elementwise max(x, 0).
pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
    }
}

/// Concatenate the input with its negation along `axis`, then apply ReLU.
///
/// Layout is fixed as [relu(x) ‖ relu(-x)] with the positive half first.
/// For every scalar input exactly one of its two outputs is nonzero unless
/// the input is exactly zero.
pub fn crelu(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.shape.len() {
        return Err(Error::usage(format!(
            "crelu axis {axis} out of range for shape {:?}",
            x.shape
        )));
    }
    let outer: usize = x.shape[..axis].iter().product();
    let block = x.shape[axis];
    let inner: usize = x.shape[axis + 1..].iter().product();
    let mut shape = x.shape.clone();
    shape[axis] = 2 * block;
    let mut data = vec![0.0; x.data.len() * 2];
    for o in 0..outer {
        let src = o * block * inner;
        let dst = o * 2 * block * inner;
        for j in 0..block * inner {
            let v = x.data[src + j];
            if v > 0.0 {
                data[dst + j] = v;
            } else if v < 0.0 {
                data[dst + block * inner + j] = -v;
            }
        }
    }
    Ok(Tensor { shape, data })
}
