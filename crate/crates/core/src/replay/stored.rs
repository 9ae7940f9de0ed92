//! Transition storage format.
//!
//! A 100k-capacity buffer of stacked f64 grids would be ~640 MB, so
//! observations whose cells are exactly 0.0 or 1.0 (every grid the task
//! suite produces, inverted modes included) are packed to one bit per cell.
//! Anything else falls back to raw f64 storage; unpacking is exact either
//! way.

use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum StoredObs {
    Bits { shape: Vec<usize>, words: Vec<u64> },
    Raw(Tensor),
}

impl StoredObs {
    pub fn pack(t: &Tensor) -> StoredObs {
        if t.data.iter().all(|&v| v == 0.0 || v == 1.0) {
            let mut words = vec![0u64; t.len().div_ceil(64)];
            for (i, &v) in t.data.iter().enumerate() {
                if v == 1.0 {
                    words[i / 64] |= 1 << (i % 64);
                }
            }
            StoredObs::Bits { shape: t.shape.clone(), words }
        } else {
            StoredObs::Raw(t.clone())
        }
    }

    pub fn unpack(&self) -> Tensor {
        match self {
            StoredObs::Bits { shape, words } => {
                let n: usize = shape.iter().product();
                let mut data = vec![0.0; n];
                for (i, slot) in data.iter_mut().enumerate() {
                    if words[i / 64] >> (i % 64) & 1 == 1 {
                        *slot = 1.0;
                    }
                }
                Tensor { shape: shape.clone(), data }
            }
            StoredObs::Raw(t) => t.clone(),
        }
    }

    /// Write the unpacked values into a flat destination slice.
    pub fn unpack_into(&self, dst: &mut [f64]) {
        match self {
            StoredObs::Bits { shape, words } => {
                let n: usize = shape.iter().product();
                debug_assert_eq!(dst.len(), n);
                for (i, slot) in dst.iter_mut().enumerate() {
                    *slot = ((words[i / 64] >> (i % 64)) & 1) as f64;
                }
            }
            StoredObs::Raw(t) => dst.copy_from_slice(&t.data),
        }
    }

    fn hash_into(&self, h: &mut u64) {
        let mix = |h: &mut u64, b: u64| {
            *h ^= b;
            *h = h.wrapping_mul(0x100000001B3);
        };
        match self {
            StoredObs::Bits { shape, words } => {
                for &s in shape {
                    mix(h, s as u64);
                }
                for &w in words {
                    mix(h, w);
                }
            }
            StoredObs::Raw(t) => mix(h, t.content_hash()),
        }
    }
}

/// One learning sample: the observed state, the action taken, the
/// discounted n-step reward sum, and the bootstrap state n steps later.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: StoredObs,
    pub action: usize,
    /// Sum of gamma^i * r over the (possibly truncated) window.
    pub reward_sum: f64,
    pub bootstrap_obs: StoredObs,
    /// gamma^len when the window ended without a terminal, exactly 0.0
    /// when it hit one.
    pub discount: f64,
    pub terminal: bool,
}

impl Transition {
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xCBF29CE484222325;
        self.obs.hash_into(&mut h);
        self.bootstrap_obs.hash_into(&mut h);
        for b in [
            self.action as u64,
            self.reward_sum.to_bits(),
            self.discount.to_bits(),
            self.terminal as u64,
        ] {
            h ^= b;
            h = h.wrapping_mul(0x100000001B3);
        }
        h
    }
}
