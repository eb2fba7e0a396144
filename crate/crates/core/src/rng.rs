//! Seedable pseudo-random number generation with stable, cross-language output.
//!
//! All randomness in this crate flows through [`SplitMix64`]: a 64-bit
//! generator with published constants whose output is reproducible bit-for-bit
//! from any implementation of the same algorithm, in any language. That is the
//! property the test fixtures rely on, and it is why this module exists
//! instead of a dependency on a general-purpose RNG crate (whose streams may
//! change between versions).

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 generator (Steele, Lea & Flood's `splitmix64`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in `[0, 1)` using the top 53 bits, so every value is an
    /// exact multiple of 2^-53 and reproducible from the integer stream.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)` by rejection, bias-free.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }
}

/// Derives an independent stream seed from a base seed and a stream index.
///
/// Equivalent to seeding SplitMix64 at `base` and taking output `salt + 1`,
/// so distinct salts give distinct, decorrelated streams and the derivation
/// is stable across releases.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    mix64(base.wrapping_add(salt.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Printable ASCII payload (0x21..=0x7E) of `len` bytes, fully determined by
/// `seed`. Used for SET values so payloads are incompressressible-ish yet
/// reproducible run to run.
pub fn printable_payload(seed: u64, len: usize) -> Vec<u8> {
    const LO: u8 = 0x21;
    const SPAN: u64 = 0x7E - 0x21 + 1;
    let mut rng = SplitMix64::new(seed);
    (0..len).map(|_| LO + rng.next_below(SPAN) as u8).collect()
}
