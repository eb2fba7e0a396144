//! Zipfian key-access distribution over a ranked key space.
//!
//! A [`ZipfianTable`] holds the full cumulative distribution for `N` keys with
//! skew `alpha`: rank `i` has probability `(1/i^alpha) / H` where `H` is the
//! generalized harmonic number `sum_{i=1..N} 1/i^alpha`. Sampling is inverse
//! CDF by binary search, O(log N) per draw, and construction is O(N). The
//! table is immutable after construction and safe to share across workers;
//! each worker draws from its own seeded stream.

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ZipfError {
    #[error("key_count must be at least 1")]
    EmptyKeySpace,
    #[error("skew must be finite and non-negative, got {0}")]
    InvalidSkew(f64),
    #[error("random draw must lie in [0,1), got {0}")]
    DrawOutOfRange(f64),
    #[error("rank {rank} outside 1..={key_count}")]
    RankOutOfRange { rank: u64, key_count: u64 },
}

/// Parameters of the distribution: `key_count` distinct keys, skew exponent
/// `skew >= 0`. Skew 0 degenerates to the uniform distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipfianParams {
    pub key_count: u64,
    pub skew: f64,
}

impl ZipfianParams {
    pub fn new(key_count: u64, skew: f64) -> Result<Self, ZipfError> {
        if key_count == 0 {
            return Err(ZipfError::EmptyKeySpace);
        }
        if !skew.is_finite() || skew < 0.0 {
            return Err(ZipfError::InvalidSkew(skew));
        }
        Ok(Self { key_count, skew })
    }
}

/// Precomputed cumulative distribution over ranks `1..=N`.
#[derive(Debug, Clone)]
pub struct ZipfianTable {
    params: ZipfianParams,
    harmonic: f64,
    cumulative: Vec<f64>,
}

impl ZipfianTable {
    /// Builds the table: harmonic normalization, per-rank probabilities, and
    /// the cumulative array used for inverse-CDF lookups.
    ///
    /// The harmonic sum accumulates from `i = N` down to `1` so the smallest
    /// terms are added first, which keeps the float error down for large `N`.
    pub fn build(params: ZipfianParams) -> Result<Self, ZipfError> {
        // Re-validate; params may have been constructed literally.
        let params = ZipfianParams::new(params.key_count, params.skew)?;
        let n = params.key_count;
        let alpha = params.skew;

        let mut harmonic = 0.0f64;
        let mut i = n;
        while i >= 1 {
            harmonic += 1.0 / (i as f64).powf(alpha);
            i -= 1;
        }

        let mut cumulative = Vec::with_capacity(n as usize);
        let mut acc = 0.0f64;
        for i in 1..=n {
            acc += (1.0 / (i as f64).powf(alpha)) / harmonic;
            cumulative.push(acc);
        }

        Ok(Self {
            params,
            harmonic,
            cumulative,
        })
    }

    pub fn params(&self) -> ZipfianParams {
        self.params
    }

    pub fn key_count(&self) -> u64 {
        self.params.key_count
    }

    /// The generalized harmonic number `H_{N,alpha}` used for normalization.
    pub fn harmonic(&self) -> f64 {
        self.harmonic
    }

    /// Probability of rank `i` (1-based).
    pub fn probability(&self, rank: u64) -> Result<f64, ZipfError> {
        if rank == 0 || rank > self.params.key_count {
            return Err(ZipfError::RankOutOfRange {
                rank,
                key_count: self.params.key_count,
            });
        }
        Ok((1.0 / (rank as f64).powf(self.params.skew)) / self.harmonic)
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Maps a uniform draw `r` in `[0,1)` to a rank: the smallest `k` with
    /// `C[k] > r`, found by binary search.
    pub fn sample_rank(&self, r: f64) -> Result<u64, ZipfError> {
        if !(0.0..1.0).contains(&r) {
            return Err(ZipfError::DrawOutOfRange(r));
        }
        let idx = self.cumulative.partition_point(|&c| c <= r);
        // The final cumulative entry can sit a hair below 1.0; a draw beyond
        // it still belongs to the last rank.
        Ok((idx as u64 + 1).min(self.params.key_count))
    }

    /// Deterministic rank stream: identical `(table, seed)` yields the
    /// identical sequence.
    pub fn stream(&self, seed: u64) -> RankStream<'_> {
        RankStream {
            table: self,
            rng: SplitMix64::new(seed),
        }
    }

    /// First `count` ranks of the stream for `seed`.
    pub fn sample_stream(&self, seed: u64, count: usize) -> Vec<u64> {
        self.stream(seed).take(count).collect()
    }
}

/// Infinite iterator of ranks drawn from a [`ZipfianTable`].
#[derive(Debug, Clone)]
pub struct RankStream<'a> {
    table: &'a ZipfianTable,
    rng: SplitMix64,
}

impl Iterator for RankStream<'_> {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let r = self.rng.next_f64();
        // next_f64 is in [0,1) by construction, so this cannot fail.
        Some(self.table.sample_rank(r).expect("draw in [0,1)"))
    }
}

/// How ranks map to key names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyScheme {
    /// `prefix` + decimal rank; rank order equals key order.
    IdentityRank,
    /// `prefix` + decimal of a seeded permutation of the rank, breaking any
    /// correlation between rank (hotness) and key locality.
    SeededPermutation,
}

/// Bijective, deterministic mapping from ranks `1..=N` to key names.
#[derive(Debug, Clone)]
pub struct KeyMapping {
    scheme: KeyScheme,
    permutation_seed: u64,
    prefix: String,
    key_count: u64,
    // Materialized only for SeededPermutation: permutation[i] is the
    // 0-based target of 0-based rank i.
    permutation: Vec<u64>,
}

impl KeyMapping {
    pub fn new(scheme: KeyScheme, permutation_seed: u64, prefix: &str, key_count: u64) -> Result<Self, ZipfError> {
        if key_count == 0 {
            return Err(ZipfError::EmptyKeySpace);
        }
        let permutation = match scheme {
            KeyScheme::IdentityRank => Vec::new(),
            KeyScheme::SeededPermutation => {
                // Fisher-Yates with the seedable generator: same
                // (seed, key_count) always yields the same permutation.
                let mut perm: Vec<u64> = (0..key_count).collect();
                let mut rng = SplitMix64::new(permutation_seed);
                for i in (1..key_count).rev() {
                    let j = rng.next_below(i + 1);
                    perm.swap(i as usize, j as usize);
                }
                perm
            }
        };
        Ok(Self {
            scheme,
            permutation_seed,
            prefix: prefix.to_string(),
            key_count,
            permutation,
        })
    }

    /// Default mapping for a key space: identity scheme with prefix `key:`.
    pub fn identity(key_count: u64) -> Result<Self, ZipfError> {
        Self::new(KeyScheme::IdentityRank, 0, "key:", key_count)
    }

    pub fn scheme(&self) -> KeyScheme {
        self.scheme
    }

    pub fn permutation_seed(&self) -> u64 {
        self.permutation_seed
    }

    pub fn key_count(&self) -> u64 {
        self.key_count
    }

    /// Key name for `rank` (1-based).
    pub fn rank_to_key(&self, rank: u64) -> Result<Vec<u8>, ZipfError> {
        if rank == 0 || rank > self.key_count {
            return Err(ZipfError::RankOutOfRange {
                rank,
                key_count: self.key_count,
            });
        }
        let shown = match self.scheme {
            KeyScheme::IdentityRank => rank,
            KeyScheme::SeededPermutation => self.permutation[(rank - 1) as usize] + 1,
        };
        Ok(format!("{}{}", self.prefix, shown).into_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::HashSet;

    fn table(n: u64, alpha: f64) -> ZipfianTable {
        ZipfianTable::build(ZipfianParams::new(n, alpha).unwrap()).unwrap()
    }

    #[test]
    fn rejects_empty_key_space() {
        assert_eq!(ZipfianParams::new(0, 1.0), Err(ZipfError::EmptyKeySpace));
    }

    #[test]
    fn rejects_bad_skew() {
        assert!(matches!(ZipfianParams::new(3, -0.1), Err(ZipfError::InvalidSkew(_))));
        assert!(matches!(ZipfianParams::new(3, f64::NAN), Err(ZipfError::InvalidSkew(_))));
    }

    #[test]
    fn uniform_when_skew_zero() {
        let t = table(2, 0.0);
        assert_abs_diff_eq!(t.probability(1).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.probability(2).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.cumulative()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.cumulative()[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn single_key_is_certain() {
        let t = table(1, 2.7);
        assert_abs_diff_eq!(t.probability(1).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.cumulative()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn three_keys_unit_skew() {
        // H = 1 + 1/2 + 1/3 = 11/6; P = [6/11, 3/11, 2/11].
        let t = table(3, 1.0);
        assert_abs_diff_eq!(t.harmonic(), 11.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.probability(1).unwrap(), 6.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.probability(2).unwrap(), 3.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.probability(3).unwrap(), 2.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.cumulative()[0], 0.545455, epsilon = 1e-6);
        assert_abs_diff_eq!(t.cumulative()[1], 0.818182, epsilon = 1e-6);
        assert_abs_diff_eq!(t.cumulative()[2], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn table_invariants_across_settings() {
        for &(n, alpha) in &[(1u64, 0.0), (10, 0.9), (1000, 1.4), (1000, 0.0), (4096, 1.0)] {
            let t = table(n, alpha);
            let c = t.cumulative();
            assert_eq!(c.len(), n as usize);
            assert_abs_diff_eq!(*c.last().unwrap(), 1.0, epsilon = 1e-9);
            let mut prev = 0.0;
            for (i, &ci) in c.iter().enumerate() {
                assert!(ci > prev, "cumulative not strictly increasing at {i}");
                let p = t.probability(i as u64 + 1).unwrap();
                assert_abs_diff_eq!(ci - prev, p, epsilon = 1e-12);
                prev = ci;
            }
        }
    }

    #[test]
    fn probabilities_monotone_nonincreasing() {
        for &alpha in &[0.0, 0.9, 1.0, 1.4] {
            let t = table(100, alpha);
            let mut prev = f64::INFINITY;
            for rank in 1..=100 {
                let p = t.probability(rank).unwrap();
                assert!(p <= prev + 1e-18);
                prev = p;
            }
        }
    }

    #[test]
    fn sample_rank_examples() {
        let t = table(3, 1.0);
        assert_eq!(t.sample_rank(0.6).unwrap(), 2);
        assert_eq!(t.sample_rank(0.0).unwrap(), 1);
        let u = table(2, 0.0);
        assert_eq!(u.sample_rank(0.5).unwrap(), 2);
    }

    #[test]
    fn sample_rank_boundaries() {
        let t = table(5, 1.1);
        let c = t.cumulative().to_vec();
        for (k, &ck) in c.iter().enumerate() {
            let eps = 1e-12;
            let below = ck - eps;
            if below >= 0.0 {
                assert_eq!(t.sample_rank(below).unwrap(), k as u64 + 1, "just below C[{k}]");
            }
            if k + 1 < c.len() {
                assert_eq!(t.sample_rank(ck).unwrap(), k as u64 + 2, "exactly C[{k}]");
            }
        }
    }

    #[test]
    fn sample_rank_rejects_out_of_range() {
        let t = table(3, 1.0);
        assert!(matches!(t.sample_rank(1.0), Err(ZipfError::DrawOutOfRange(_))));
        assert!(matches!(t.sample_rank(-0.1), Err(ZipfError::DrawOutOfRange(_))));
    }

    #[test]
    fn stream_deterministic_and_empty() {
        let t = table(50, 0.9);
        assert!(t.sample_stream(42, 0).is_empty());
        let a = t.sample_stream(42, 10);
        let b = t.sample_stream(42, 10);
        assert_eq!(a, b);
        let c = t.sample_stream(43, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn stream_hits_top_rank_at_expected_rate() {
        // Empirical share of rank 1 matches 1/H within a generous bound.
        let t = table(1000, 0.9);
        let hits = t.stream(7).take(200_000).filter(|&r| r == 1).count();
        let expected = 1.0 / t.harmonic();
        let got = hits as f64 / 200_000.0;
        assert!((got - expected).abs() < 0.005, "got {got}, expected {expected}");
    }

    #[test]
    fn higher_skew_concentrates_top_ranks() {
        let lo = table(1000, 0.9);
        let hi = table(1000, 1.4);
        let count_top10 = |t: &ZipfianTable| t.stream(11).take(100_000).filter(|&r| r <= 10).count();
        assert!(count_top10(&hi) > count_top10(&lo));
    }

    #[test]
    fn identity_mapping_format() {
        let m = KeyMapping::identity(10).unwrap();
        assert_eq!(m.rank_to_key(7).unwrap(), b"key:7".to_vec());
        assert!(matches!(m.rank_to_key(0), Err(ZipfError::RankOutOfRange { .. })));
        assert!(matches!(m.rank_to_key(11), Err(ZipfError::RankOutOfRange { .. })));
    }

    #[test]
    fn permutation_mapping_is_bijective_and_stable() {
        let m1 = KeyMapping::new(KeyScheme::SeededPermutation, 99, "key:", 100).unwrap();
        let m2 = KeyMapping::new(KeyScheme::SeededPermutation, 99, "key:", 100).unwrap();
        let keys: HashSet<Vec<u8>> = (1..=100).map(|r| m1.rank_to_key(r).unwrap()).collect();
        assert_eq!(keys.len(), 100);
        for r in 1..=100 {
            assert_eq!(m1.rank_to_key(r).unwrap(), m2.rank_to_key(r).unwrap());
        }
    }
}
