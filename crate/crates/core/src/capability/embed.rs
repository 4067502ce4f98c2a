//! Text embedding.
//!
//! [`HashingEmbedder`] is a deterministic stand-in for a sentence-embedding
//! model: lowercase alphanumeric tokens are hashed into signed buckets, the
//! counts accumulated and the result L2-normalized. Texts that share tokens
//! land close together in cosine, which is all the routing and clustering
//! code depends on. Plug a real model in through [`Embedder`].

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::vector::{normalized, stable_hash};

pub const FULL_DIM: usize = 768;
pub const REDUCED_DIM: usize = 256;

const TOKEN_SEED: u64 = 0x00f0_a5ee_d001;
const PROJECTION_SEED: u64 = 0x00f0_a5ee_d256;

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str, dim: usize) -> Result<Vec<f64>>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct HashingEmbedder;

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str, dim: usize) -> Result<Vec<f64>> {
        embed_text(text, dim)
    }
}

/// Lowercased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn embed_text(text: &str, dim: usize) -> Result<Vec<f64>> {
    if text.is_empty() {
        return Err(Error::invalid("cannot embed empty text"));
    }
    if dim != FULL_DIM && dim != REDUCED_DIM {
        return Err(Error::invalid(format!(
            "embedding dimension must be {FULL_DIM} or {REDUCED_DIM}, got {dim}"
        )));
    }
    let mut acc = vec![0.0; dim];
    let mut any = false;
    for token in tokenize(text) {
        add_token(&mut acc, &token);
        any = true;
    }
    if !any {
        // punctuation-only text still gets a stable direction
        add_token(&mut acc, text);
    }
    normalized(&acc)
}

fn add_token(acc: &mut [f64], token: &str) {
    let h = stable_hash(TOKEN_SEED, token.as_bytes());
    let bucket = (h % acc.len() as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    acc[bucket] += sign;
}

fn projection() -> &'static [Vec<f64>] {
    static PROJ: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    PROJ.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
        let scale = 1.0 / (REDUCED_DIM as f64).sqrt();
        (0..REDUCED_DIM)
            .map(|_| {
                (0..FULL_DIM)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * scale
                    })
                    .collect()
            })
            .collect()
    })
}

/// Fixed Gaussian random projection from 768 to 256 dimensions, re-normalized.
pub fn reduce_dim(vec: &[f64]) -> Result<Vec<f64>> {
    if vec.len() != FULL_DIM {
        return Err(Error::invalid(format!(
            "reduce_dim expects length {FULL_DIM}, got {}",
            vec.len()
        )));
    }
    let out: Vec<f64> = projection()
        .iter()
        .map(|row| crate::vector::dot(row, vec))
        .collect();
    normalized(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::{cosine, norm};

    #[test]
    fn deterministic_and_unit() {
        let a = embed_text("triage chest pain", 768).unwrap();
        let b = embed_text("triage chest pain", 768).unwrap();
        assert_eq!(a, b);
        assert!((norm(&embed_text("x", 768).unwrap()) - 1.0).abs() <= 1e-6);
        assert!((cosine(&a, &b).unwrap() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(embed_text("", 768).is_err());
        assert!(embed_text("hello", 100).is_err());
        assert!(reduce_dim(&[1.0; 10]).is_err());
        assert!(reduce_dim(&vec![0.0; 768]).is_err());
    }

    #[test]
    fn token_overlap_orders_similarity() {
        let q = embed_text("cardiology chest pain triage", 768).unwrap();
        let near = embed_text("chest pain triage protocol", 768).unwrap();
        let far = embed_text("tax law contract review", 768).unwrap();
        assert!(cosine(&q, &near).unwrap() > cosine(&q, &far).unwrap());
    }

    #[test]
    fn punctuation_only_text_embeds() {
        let v = embed_text("?!", 256).unwrap();
        assert!((norm(&v) - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn reduction_is_unit_and_deterministic() {
        let v = embed_text("renal dosing for anticoagulants", 768).unwrap();
        let a = reduce_dim(&v).unwrap();
        assert_eq!(a.len(), 256);
        assert!((norm(&a) - 1.0).abs() <= 1e-6);
        assert_eq!(a, reduce_dim(&v).unwrap());
    }
}
