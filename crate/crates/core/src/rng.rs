//! Seeded, stream-split randomness.
//!
//! Every random draw made by a training loop comes from its own ChaCha8
//! stream keyed by `(iteration, slot, purpose)`. Adding a new consumer of
//! randomness therefore never shifts the draws seen by existing ones.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Purpose {
    InitialState = 1,
    Response = 2,
    Comparison = 3,
    Label = 4,
    HistoryPick = 5,
    OptimismSamples = 6,
    Minimizer = 7,
    Validation = 8,
    Diagnostics = 9,
}

/// A root seed from which independent named streams are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStreams {
    seed: u64,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for `(iteration, slot, purpose)`. `slot` distinguishes several
    /// draws of the same purpose within one iteration (batch members); it
    /// must stay below 2^16 and `iteration` below 2^40.
    pub fn stream(&self, iteration: u64, slot: u64, purpose: Purpose) -> StreamRng {
        debug_assert!(slot < (1 << 16) && iteration < (1 << 40));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((iteration << 24) | (slot << 8) | purpose as u64);
        rng
    }
}

/// Uniform draw in `[0, 1)`.
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Draws an index from a (not necessarily normalized) weight vector by
/// inverse CDF. Returns `None` when the total weight is not positive.
pub fn sample_categorical<R: RngCore + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let u = uniform(rng) * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    last_positive
}
