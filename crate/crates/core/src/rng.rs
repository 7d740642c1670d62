//! Small deterministic RNG used wherever the model needs randomness.
//!
//! SplitMix64 is stable across platforms and compiler versions, which keeps
//! seeded reports byte-identical between runs. Search code derives one stream
//! per candidate from (seed, candidate index) so evaluation order never
//! changes results.

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Derive an independent stream for a sub-task, e.g. one search candidate.
    pub fn derive(seed: u64, index: u64) -> Self {
        let mut base = Self::new(seed);
        let a = base.next_u64();
        Self::new(a ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, bound). Bound must be non-zero.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // Modulo bias is irrelevant at the bounds used here (<< 2^32).
        self.next_u64() % bound
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform usize index into a slice of the given length.
    pub fn index(&mut self, len: usize) -> usize {
        self.next_below(len as u64) as usize
    }
}
