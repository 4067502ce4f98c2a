//! Bloom filter over string keys with double hashing.

use serde::{Deserialize, Serialize};

use super::bits::BitSet;
use crate::error::Result;
use crate::vector::stable_hash;

pub const DEFAULT_BLOOM_BITS: usize = 1024;
pub const DEFAULT_BLOOM_HASHES: u32 = 4;

const PROBE_SEED_A: u64 = 0x5b1f_0a11;
const PROBE_SEED_B: u64 = 0x0c0f_fee5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BloomFilter {
    bits: BitSet,
    hashes: u32,
}

impl Default for BloomFilter {
    fn default() -> Self {
        Self::new(DEFAULT_BLOOM_BITS, DEFAULT_BLOOM_HASHES).expect("default bloom parameters")
    }
}

impl BloomFilter {
    pub fn new(bits: usize, hashes: u32) -> Result<Self> {
        if hashes == 0 {
            return Err(crate::Error::invalid("bloom filter needs at least one hash"));
        }
        Ok(Self {
            bits: BitSet::new(bits)?,
            hashes,
        })
    }

    pub fn from_bits(bits: BitSet, hashes: u32) -> Self {
        Self { bits, hashes }
    }

    pub fn from_items<'a>(items: impl IntoIterator<Item = &'a str>) -> Self {
        let mut f = Self::default();
        for item in items {
            f.insert(item);
        }
        f
    }

    fn probes(&self, key: &str) -> impl Iterator<Item = usize> {
        let h1 = stable_hash(PROBE_SEED_A, key.as_bytes());
        // odd step so every probe sequence visits distinct slots for power-of-two sizes
        let h2 = stable_hash(PROBE_SEED_B, key.as_bytes()) | 1;
        let len = self.bits.len() as u64;
        (0..u64::from(self.hashes)).map(move |i| (h1.wrapping_add(i.wrapping_mul(h2)) % len) as usize)
    }

    pub fn insert(&mut self, key: &str) {
        let probes: Vec<usize> = self.probes(key).collect();
        for p in probes {
            self.bits.set(p);
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.probes(key).all(|p| self.bits.get(p))
    }

    pub fn bits(&self) -> &BitSet {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.count_ones() == 0
    }

    pub fn hashes(&self) -> u32 {
        self.hashes
    }

    /// Analytic false-positive probability after `n` distinct insertions.
    pub fn expected_fp_rate(&self, n: usize) -> f64 {
        let k = f64::from(self.hashes);
        let m = self.bits.len() as f64;
        (1.0 - (-k * n as f64 / m).exp()).powf(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_filter_contains_nothing() {
        let f = BloomFilter::default();
        assert!(!f.contains("triage"));
        assert!(!f.contains(""));
        assert!(f.is_empty());
    }

    #[test]
    fn no_false_negatives() {
        let mut f = BloomFilter::default();
        let skills: Vec<String> = (0..300).map(|i| format!("skill-{i}")).collect();
        for s in &skills {
            f.insert(s);
        }
        assert!(skills.iter().all(|s| f.contains(s)));
    }

    #[test]
    fn false_positive_rate_tracks_analytic_formula() {
        // (1 - e^{-4*100/1024})^4 = 0.010933979... evaluated independently
        const EXPECTED: f64 = 0.010_933_979_227_141_104;
        let mut f = BloomFilter::default();
        for i in 0..100 {
            f.insert(&format!("present-skill-{i}"));
        }
        assert!((f.expected_fp_rate(100) - EXPECTED).abs() < 1e-12);
        let fp = (0..10_000)
            .filter(|i| f.contains(&format!("absent-skill-{i}")))
            .count() as f64
            / 10_000.0;
        assert!(
            (fp - EXPECTED).abs() <= 0.5 * EXPECTED,
            "measured fp {fp} vs expected {EXPECTED}"
        );
    }

    #[test]
    fn zero_hashes_rejected() {
        assert!(BloomFilter::new(64, 0).is_err());
    }
}
