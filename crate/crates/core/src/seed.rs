//! Seed derivation for reproducible, order-independent Monte-Carlo streams.
//!
//! Every random stream in an experiment is a `ChaCha8Rng` seeded from a 64-bit
//! value obtained by folding labels into the master seed with the SplitMix64
//! finaliser. Channel streams depend only on `(master, sweep index, trial)`;
//! method streams additionally fold in a method tag, so adding or removing a
//! method never perturbs the channels or the other methods.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `label` into `seed`.
pub fn derive(seed: u64, label: u64) -> u64 {
    mix64(seed ^ mix64(label))
}

/// FNV-1a, used to turn method tags into labels.
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of the channel stream for one (sweep point, trial) cell.
pub fn channel_seed(master: u64, sweep_index: usize, trial: usize) -> u64 {
    derive(derive(master, sweep_index as u64), trial as u64)
}

/// Seed of a method's internal stream on a given realization.
pub fn method_seed(channel_seed: u64, method: &str) -> u64 {
    derive(channel_seed, tag(method))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
