//! Versioned Capability Vectors and their supporting pieces: the embedding
//! stub, skill Bloom filters, version semantics and Δ-gossip.

mod bits;
mod bloom;
mod embed;
mod gossip;
mod vcv;

pub use bits::BitSet;
pub use bloom::{BloomFilter, DEFAULT_BLOOM_BITS, DEFAULT_BLOOM_HASHES};
pub use embed::{embed_text, reduce_dim, tokenize, Embedder, HashingEmbedder, FULL_DIM, REDUCED_DIM};
pub use gossip::{apply_delta, diff_deltas, Digest, GossipNode, VcvDelta, VcvSet};
pub use vcv::{
    bump_version, validate_resources, SpecDocument, Vcv, VcvMutation, BANDWIDTH_MBPS,
    ENERGY_UNITS, LATENCY_MS, MEMORY_GB, POLICY_BITS, RESOURCE_DIM,
};
