use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Fixed-length bit array. Lengths are whole bytes so that the base64 wire
/// form round-trips exactly.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitSet {
    len: usize,
    bytes: Vec<u8>,
}

impl BitSet {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || !len.is_multiple_of(8) {
            return Err(Error::invalid(format!(
                "bit length must be a positive multiple of 8, got {len}"
            )));
        }
        Ok(Self {
            len,
            bytes: vec![0; len / 8],
        })
    }

    /// Builds a set of length `len` with the given bit indices raised.
    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut set = Self::new(len)?;
        for i in indices {
            if i >= len {
                return Err(Error::invalid(format!("bit {i} out of range for length {len}")));
            }
            set.set(i);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        self.bytes[i / 8] |= 1 << (i % 8);
    }

    pub fn clear(&mut self, i: usize) {
        self.bytes[i / 8] &= !(1 << (i % 8));
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.bytes[i / 8] & (1 << (i % 8)) != 0
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }

    /// True iff every bit raised in `self` is raised in `other`. Bits beyond
    /// the shorter length count as zero.
    pub fn is_subset_of(&self, other: &BitSet) -> bool {
        self.bytes.iter().enumerate().all(|(i, b)| {
            let o = other.bytes.get(i).copied().unwrap_or(0);
            b & !o == 0
        })
    }

    pub fn to_base64(&self) -> String {
        STANDARD.encode(&self.bytes)
    }

    pub fn from_base64(s: &str) -> Result<Self> {
        let bytes = STANDARD
            .decode(s)
            .map_err(|e| Error::invalid(format!("bad base64 bitset: {e}")))?;
        if bytes.is_empty() {
            return Err(Error::invalid("empty bitset"));
        }
        Ok(Self {
            len: bytes.len() * 8,
            bytes,
        })
    }
}

impl Serialize for BitSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for BitSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        BitSet::from_base64(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_semantics() {
        let a = BitSet::from_indices(64, [1, 5]).unwrap();
        let b = BitSet::from_indices(64, [1, 5, 9]).unwrap();
        assert!(a.is_subset_of(&b));
        assert!(!b.is_subset_of(&a));
        assert!(BitSet::new(64).unwrap().is_subset_of(&a));
    }

    #[test]
    fn rejects_ragged_lengths() {
        assert!(BitSet::new(0).is_err());
        assert!(BitSet::new(12).is_err());
        assert!(BitSet::from_indices(8, [8]).is_err());
    }

    #[test]
    fn base64_round_trip() {
        let a = BitSet::from_indices(64, [0, 7, 8, 63]).unwrap();
        assert_eq!(BitSet::from_base64(&a.to_base64()).unwrap(), a);
    }
}
