//! Complete binary tree of priority sums for proportional sampling.
//!
//! Leaf updates recompute every ancestor as the exact sum of its two
//! children, so each internal node always equals child-left + child-right
//! bit-for-bit and no incremental drift accumulates. A parallel max tree
//! serves the new-transition priority rule.

#[derive(Debug, Clone)]
pub struct SumTree {
    /// Leaf capacity, a power of two.
    cap: usize,
    /// sums[1] is the root; leaves live at [cap, 2*cap).
    sums: Vec<f64>,
    maxs: Vec<f64>,
}

impl SumTree {
    /// Rounds the requested capacity up to a power of two. Extra leaves
    /// keep priority zero and are never selected.
    pub fn new(min_capacity: usize) -> SumTree {
        let cap = min_capacity.max(1).next_power_of_two();
        SumTree {
            cap,
            sums: vec![0.0; 2 * cap],
            maxs: vec![0.0; 2 * cap],
        }
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn total(&self) -> f64 {
        self.sums[1]
    }

    /// Largest live leaf priority (0 when nothing is stored).
    pub fn max_priority(&self) -> f64 {
        self.maxs[1]
    }

    pub fn priority(&self, leaf: usize) -> f64 {
        self.sums[self.cap + leaf]
    }

    /// Set one leaf and repair every ancestor sum/max along the path.
    pub fn set(&mut self, leaf: usize, priority: f64) {
        assert!(leaf < self.cap, "leaf {leaf} outside capacity {}", self.cap);
        assert!(priority >= 0.0 && priority.is_finite(), "priority must be finite and non-negative");
        let mut i = self.cap + leaf;
        self.sums[i] = priority;
        self.maxs[i] = priority;
        while i > 1 {
            i /= 2;
            self.sums[i] = self.sums[2 * i] + self.sums[2 * i + 1];
            self.maxs[i] = self.maxs[2 * i].max(self.maxs[2 * i + 1]);
        }
    }

    /// Leaf index whose cumulative-sum interval [cumsum_{i-1}, cumsum_i)
    /// contains u. Requires 0 <= u < total(); u at or beyond the total is
    /// clamped into the last nonzero leaf.
    pub fn select(&self, u: f64) -> usize {
        let mut u = u;
        let mut i = 1;
        while i < self.cap {
            let left = 2 * i;
            // An empty right subtree also routes left, which keeps
            // boundary-rounded draws out of the zero tail.
            if u < self.sums[left] || self.sums[left + 1] == 0.0 {
                i = left;
            } else {
                u -= self.sums[left];
                i = left + 1;
            }
        }
        i - self.cap
    }

    /// The root recomputed from the leaves with the same pairwise shape the
    /// incremental updates use; equal to `total()` bit-for-bit.
    pub fn recompute_total(&self) -> f64 {
        let mut level: Vec<f64> = self.sums[self.cap..].to_vec();
        while level.len() > 1 {
            level = level.chunks(2).map(|c| c[0] + c[1]).collect();
        }
        level[0]
    }
}
