//! Deterministic random streams.
//!
//! Every random quantity in a campaign is drawn from a ChaCha stream named by
//! the experiment seed plus a [`StreamId`]. The seed selects the key and the
//! stream id selects the 64-bit ChaCha stream (nonce), so draws for a trial do
//! not depend on evaluation order or on how many worker threads run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Part of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Channel = 1,
    Bits = 2,
    Noise = 3,
    Gsc = 4,
    Angles = 5,
}

/// Name of one independent random stream within an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub trial: u64,
    pub purpose: Purpose,
    pub i: u16,
    pub j: u16,
}

impl StreamId {
    pub const TRIAL_BITS: u32 = 40;

    pub fn new(trial: u64, purpose: Purpose, i: usize, j: usize) -> Self {
        assert!(trial < (1 << Self::TRIAL_BITS), "trial index too large");
        assert!(i < 1024 && j < 1024, "stream sub-index too large");
        StreamId {
            trial,
            purpose,
            i: i as u16,
            j: j as u16,
        }
    }

    /// Packs the id into the 64-bit ChaCha stream number:
    /// `trial(40) | purpose(4) | i(10) | j(10)`.
    pub fn packed(&self) -> u64 {
        (self.trial << 24) | ((self.purpose as u64 & 0xf) << 20) | ((self.i as u64) << 10) | self.j as u64
    }
}

/// Opens the stream `id` of experiment `seed`.
pub fn stream(seed: u64, id: StreamId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.packed());
    rng
}
