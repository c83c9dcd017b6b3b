//! Portable deterministic random numbers.
//!
//! Every stochastic component (noise injection, the detector oracle) draws
//! from [`SplitMix64`], a counter-based 64-bit generator with a published
//! reference implementation. Streams are keyed by mixing a base seed with
//! the image id and a variant tag, so any (seed, image, variant) triple
//! reproduces bit-identical values on every platform, independent of
//! iteration order or thread scheduling.

/// SplitMix64: `state` advances by the golden-ratio increment and each
/// output is a finalizer hash of the new state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output finalizer. Also used on its own to mix stream keys.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over raw bytes; turns string identifiers into stream keys.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Derive an independent stream from `(seed, image_id, tag)`.
    ///
    /// The components are folded in sequentially through the finalizer so
    /// that e.g. `(1, 2)` and `(2, 1)` produce unrelated streams.
    pub fn for_stream(seed: u64, image_id: u64, tag: &str) -> Self {
        let k = mix64(mix64(mix64(seed) ^ image_id) ^ fnv1a64(tag.as_bytes()));
        SplitMix64::new(k)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1), 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Multiply-shift bounded sampling; bias is < 2^-64 and irrelevant here.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Standard normal via Box-Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        // Guard the log argument away from zero.
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Poisson sample by Knuth's product-of-uniforms method.
    ///
    /// Fine for the small rates used by the detector oracle.
    pub fn next_poisson(&mut self, rate: f64) -> u64 {
        if rate <= 0.0 {
            return 0;
        }
        let limit = (-rate).exp();
        let mut k = 0u64;
        let mut p = 1.0;
        loop {
            p *= self.next_f64();
            if p <= limit {
                return k;
            }
            k += 1;
        }
    }
}
