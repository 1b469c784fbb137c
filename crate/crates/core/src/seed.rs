//! Seed derivation and the random generator used by every kernel.
//!
//! Each `(global seed, pair id, kind, severity)` tuple is hashed with SHA-256
//! into a 64-bit seed. That seed keys a ChaCha20 generator
//! (`rand_chacha::ChaCha20Rng::seed_from_u64`). Independent sub-streams for
//! shared parameters and for each frame come from ChaCha's 64-bit stream id,
//! so draws for frame B never depend on how many were consumed for frame A.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::corruption::{CorruptionKind, Severity};

pub type Rng = ChaCha20Rng;

const DOMAIN_TAG: &[u8] = b"flowcorrupt/seed/v1";

/// Mixes the four inputs into one seed. Stable across platforms and runs.
pub fn derive_seed(global_seed: u64, pair_id: &str, kind: CorruptionKind, severity: Severity) -> u64 {
    let mut h = Sha256::new();
    h.update(DOMAIN_TAG);
    h.update(global_seed.to_le_bytes());
    h.update((pair_id.len() as u64).to_le_bytes());
    h.update(pair_id.as_bytes());
    let name = kind.name();
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update([severity.get()]);
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

/// Named sub-streams of one corruption seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Parameters shared by both frames (directions, overlays, offsets).
    Shared = 0,
    FrameA = 1,
    FrameB = 2,
}

pub fn rng_for(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
