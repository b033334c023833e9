//! Named substreams of a root seed.

use sha2::{Digest, Sha256};

/// Seed for component `tag`, instance `index`, derived from `root`. Distinct
/// (tag, index) pairs give unrelated seeds.
pub fn substream_seed(root: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
