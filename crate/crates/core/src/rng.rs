//! Reproducible random streams.
//!
//! A stream is a `(master_seed, stream_id)` pair. The master seed keys a
//! ChaCha8 generator and the stream id selects one of its 2^64 independent
//! streams. Replication `r` of an estimator always draws from
//! `stream_id + r`, so results never depend on how work is split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAX_TAG_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    /// Generator for the stream itself.
    pub fn rng(&self) -> ChaCha8Rng {
        self.rng_for(0)
    }

    /// Generator for replication `index`, i.e. stream `stream_id + index`.
    pub fn rng_for(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id.wrapping_add(index));
        rng
    }

    /// A child stream keyed by `(tag, index)`; distinct children of the same
    /// parent do not overlap in practice.
    pub fn fork(&self, tag: &str, index: u64) -> RngStream {
        RngStream {
            master_seed: self.master_seed,
            stream_id: keyed_hash(self.master_seed, self.stream_id, tag.as_bytes(), index),
        }
    }
}

fn keyed_hash(key: u64, parent: u64, tag: &[u8], index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"vgex-stream");
    h.update(key.to_le_bytes());
    h.update(parent.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag);
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Derives the stream for a named purpose from a master seed.
pub fn derive_stream(master_seed: u64, purpose_tag: &str, index: u64) -> Result<RngStream> {
    if purpose_tag.is_empty() {
        return Err(Error::domain("purpose tag must be nonempty"));
    }
    if purpose_tag.len() > MAX_TAG_LEN {
        return Err(Error::domain(format!(
            "purpose tag `{purpose_tag}` exceeds {MAX_TAG_LEN} bytes"
        )));
    }
    Ok(RngStream {
        master_seed,
        stream_id: keyed_hash(master_seed, 0, purpose_tag.as_bytes(), index),
    })
}
