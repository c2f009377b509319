//! Deterministic random number generation.
//!
//! The whole toolkit runs on a single splittable 64-bit generator so that
//! identical `(config, seed)` pairs produce bit-identical results on every
//! platform and at every thread count. Parallel work derives independent
//! substreams keyed by `(seed, stream id)` instead of sharing one stream.

/// SplitMix64 finalizer. Bijective, passes BigCrush, and cheap enough to
/// re-derive substreams on the fly.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: mix64(seed) }
    }

    /// Substream `id` of the generator family rooted at `seed`.
    ///
    /// Streams for distinct `(seed, id)` pairs are statistically independent;
    /// this is the only sanctioned way to hand randomness to parallel tasks.
    pub fn substream(seed: u64, id: u64) -> Self {
        SplitMix64 {
            state: mix64(mix64(seed) ^ mix64(id ^ 0x5851_f42d_4c95_7f2d)),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform draw from `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// Uniform integer in `[0, n)` via Lemire's widening multiply (unbiased
    /// enough at desk scale and branch-free, so streams stay aligned).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }
}
