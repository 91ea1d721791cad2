//! Deterministic counter-based pseudorandom streams.
//!
//! Every random decision in the compression pipeline is drawn from a
//! [`CounterStream`]: the i-th output is `splitmix64(key + i * GAMMA)`, a pure
//! function of the substream key and the counter. Substream keys are derived
//! by hashing a parent seed with a tag (layer name, code value, interval
//! index), so results do not depend on iteration or scheduling order and
//! layers can be processed in parallel without losing reproducibility.

/// Weyl increment used by the SplitMix64 sequence.
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a high-quality 64-bit mixing function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a substream key from a parent seed and an integer tag.
#[inline]
pub fn derive_u64(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ tag.wrapping_mul(GAMMA).rotate_left(17))
}

/// Derives a substream key from a parent seed and a byte-string tag
/// (FNV-1a over the bytes, then mixed with the seed).
pub fn derive_str(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in tag.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix64(seed ^ h)
}

/// A counter-based generator: output i is `mix64(key + (i+1)*GAMMA)`.
///
/// Draws from different streams are independent of the order in which the
/// streams are consumed; draws within a stream are indexed by the counter.
#[derive(Debug, Clone)]
pub struct CounterStream {
    key: u64,
    counter: u64,
}

impl CounterStream {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// Output at an explicit counter position, without advancing the stream.
    #[inline]
    pub fn at(key: u64, index: u64) -> u64 {
        mix64(key.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = Self::at(self.key, self.counter);
        self.counter += 1;
        out
    }

    /// Uniform draw in [0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        // 53 high bits -> [0,1) with full double precision.
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli draw with the given success probability.
    #[inline]
    pub fn next_bool(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            self.counter += 1;
            return true;
        }
        if p <= 0.0 {
            self.counter += 1;
            return false;
        }
        self.next_f64() < p
    }
}
