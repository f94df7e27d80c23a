//! Counter-based seed derivation and deterministic parallel trial maps.
//!
//! Every trial gets its own RNG stream keyed by `(master, stream, index)`, so a
//! sweep produces the same numbers whether it runs on one worker or many.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type TrialRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for element `index` of `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(master ^ mix64(stream)).wrapping_add(index))
}

pub fn rng_from_seed(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn trial_rng(master: u64, stream: u64, index: u64) -> TrialRng {
    rng_from_seed(derive_seed(master, stream, index))
}

/// Named streams so unrelated experiment stages never share seeds.
pub mod streams {
    pub const BASE: u64 = 0x01;
    pub const MASK: u64 = 0x02;
    pub const REFINE: u64 = 0x03;
    pub const TRIAL: u64 = 0x10;
    pub const SIM_BLOCK: u64 = 0x20;
    pub const BON_BLOCK: u64 = 0x21;
    pub const SCALING: u64 = 0x30;
    pub const TESTBED: u64 = 0x31;
}

/// Map `f` over `0..n` on `workers` threads (0 = rayon default), returning
/// results in index order.
pub fn par_map_indexed<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let run = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
    if workers == 0 {
        run()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(run),
            Err(_) => (0..n).map(&f).collect(),
        }
    }
}
