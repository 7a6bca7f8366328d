//! Counter-style random substreams.
//!
//! Every random quantity in a run is drawn from its own ChaCha stream,
//! addressed by what it is (purpose) and where it lives (slot, network,
//! user, AP). Results therefore do not depend on evaluation order or on how
//! work is split between threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Channel = 1,
    Access = 2,
    ReferenceBeam = 3,
    Spaces = 4,
    WarmupChannel = 5,
    WarmupBeam = 6,
    Conditioning = 7,
    Probe = 8,
}

const AP_BITS: u32 = 6;
const RAN_BITS: u32 = 6;
const USER_BITS: u32 = 12;
const SLOT_BITS: u32 = 36;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a parent seed and a list of indices.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

/// Root of all substreams for one replication.
#[derive(Debug, Clone)]
pub struct StreamSource {
    key: [u8; 32],
}

impl StreamSource {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_mut(8).enumerate() {
            chunk.copy_from_slice(&mix64(seed ^ (i as u64).wrapping_mul(0xA24B_AED4_963E_E407)).to_le_bytes());
        }
        Self { key }
    }

    pub fn stream(&self, purpose: Purpose, slot: u64, ran: usize, user: usize, ap: usize) -> ChaCha8Rng {
        debug_assert!(slot < 1 << SLOT_BITS);
        debug_assert!(ran < 1 << RAN_BITS && user < 1 << USER_BITS && ap < 1 << AP_BITS);
        let id = (slot & ((1 << SLOT_BITS) - 1))
            | ((user as u64) << SLOT_BITS)
            | ((ran as u64) << (SLOT_BITS + USER_BITS))
            | ((ap as u64) << (SLOT_BITS + USER_BITS + RAN_BITS));
        // Purpose selects the key, the address selects the 64-bit stream.
        let mut key = self.key;
        key[31] ^= purpose as u8;
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(id);
        rng
    }
}
