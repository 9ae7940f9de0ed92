//! Named parameter collection shared by the optimizer and checkpoints.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Ordered, named parameter tensors. Order is fixed at construction and is
/// the canonical iteration order for optimizer updates and checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn value(&self, idx: usize) -> &Tensor {
        &self.values[idx]
    }

    pub fn value_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.values[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter())
    }

    /// Total scalar parameter count.
    pub fn total_len(&self) -> usize {
        self.values.iter().map(|t| t.len()).sum()
    }

    /// Hash over names, shapes, and exact value bits.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xCBF29CE484222325;
        for (name, t) in self.iter() {
            h ^= crate::util::fnv1a(name.as_bytes());
            h = h.wrapping_mul(0x100000001B3);
            h ^= t.content_hash();
            h = h.wrapping_mul(0x100000001B3);
        }
        h
    }

    /// Copy all values from `other`; shapes and names must match.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(Error::usage("copy_from: parameter names differ"));
        }
        for (dst, src) in self.values.iter_mut().zip(other.values.iter()) {
            if dst.shape != src.shape {
                return Err(Error::shape(
                    "copy_from",
                    format!("{:?}", dst.shape),
                    format!("{:?}", src.shape),
                ));
            }
            dst.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}
