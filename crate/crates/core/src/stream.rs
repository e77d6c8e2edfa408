//! Counter-based random streams.
//!
//! Every random quantity is addressed by `(seed, replicate, channel, index)`:
//! the seed and channel pick a ChaCha8 key, the replicate picks the ChaCha
//! stream and the index picks the word position. Replaying any value, or
//! extending a clock past what was sampled before, therefore reproduces the
//! same numbers regardless of how work is split across threads.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Channels 0 and 1 are the exponential clocks of bins 1 and 2; auxiliary
/// draws (thresholds, discrete steps) use channels from here on.
pub const AUX_CHANNEL: u64 = 1 << 32;

const TWO_POW_52_INV: f64 = 1.0 / (1u64 << 52) as f64;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps a 64-bit word to the open interval `(0, 1)`.
#[inline]
pub fn open_unit(word: u64) -> f64 {
    ((word >> 12) as f64 + 0.5) * TWO_POW_52_INV
}

/// Base seed of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    seed: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replicate(&self, index: u64) -> Replicate {
        Replicate { seed: self.seed, index }
    }
}

/// One independent replicate of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Replicate {
    seed: u64,
    index: u64,
}

impl Replicate {
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Sequential generator for one channel of this replicate.
    pub fn rng(&self, channel: u64) -> ChaCha8Rng {
        let mut state = self.seed ^ channel.wrapping_mul(0xd6e8_feb8_6659_fd93);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.index);
        rng
    }

    /// Indexed unit exponentials for the clock of `bin` (0-based).
    pub fn clock(&self, bin: usize) -> IndexedExponentials {
        IndexedExponentials {
            rng: self.rng(bin as u64),
            next: 0,
        }
    }
}

/// Random access to `E_j = -ln U_j`, `j = 0, 1, ...`, one 64-bit word each.
#[derive(Debug, Clone)]
pub struct IndexedExponentials {
    rng: ChaCha8Rng,
    next: u64,
}

impl IndexedExponentials {
    #[inline]
    pub fn uniform(&mut self, j: u64) -> f64 {
        if j != self.next {
            self.rng.set_word_pos(2 * j as u128);
        }
        self.next = j + 1;
        open_unit(self.rng.next_u64())
    }

    #[inline]
    pub fn exponential(&mut self, j: u64) -> f64 {
        -self.uniform(j).ln()
    }
}
