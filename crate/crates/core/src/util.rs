//! Deterministic seeding and content hashing helpers.
//!
//! Every random stream in a run is derived from the master seed through
//! `derive_seed`, so a run is a pure function of its (config, seed) pair.
//! The mixer is a fixed splitmix64 rather than the stdlib hasher, whose
//! output is not guaranteed stable across toolchains.

/// Named sub-streams of a run's master seed.
pub mod stream {
    pub const AGENT_INIT: u64 = 1;
    pub const AGENT_POLICY: u64 = 2;
    pub const REPLAY: u64 = 3;
    pub const EPISODES: u64 = 4;
    pub const PROBES: u64 = 5;
}

/// One-time allocator tuning for the training loop's allocation pattern.
///
/// Each learn step allocates and frees ~100 KB of tape buffers. glibc's
/// default trim threshold (128 KB) hands that memory back to the kernel on
/// every free, so every step pays page faults instead of reusing the heap;
/// raising the threshold makes the loop ~2x faster end to end.
#[cfg(all(target_os = "linux", target_env = "gnu"))]
pub fn tune_allocator_for_training() {
    use std::sync::Once;
    static ONCE: Once = Once::new();
    ONCE.call_once(|| unsafe {
        libc::mallopt(libc::M_TRIM_THRESHOLD, 256 * 1024 * 1024);
        libc::mallopt(libc::M_TOP_PAD, 16 * 1024 * 1024);
    });
}

#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
pub fn tune_allocator_for_training() {}

/// splitmix64 mixing step (Steele et al.'s SplittableRandom finalizer).
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Derive an independent sub-seed from a master seed and a stream tag.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream))
}

/// FNV-1a over raw bytes; used for cheap read-only/state-mutation checks.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF29CE484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001B3);
    }
    h
}

/// Hash a slice of f64 values by their bit patterns.
pub fn hash_f64s(values: &[f64]) -> u64 {
    let mut h: u64 = 0xCBF29CE484222325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001B3);
        }
    }
    h
}
