//! The engine's single random-number generator and its seed derivation.
//!
//! Every random decision in the engine comes from a [`EngineRng`] built by
//! [`stream`]. A stream is identified by the master seed plus a path of
//! integers (replication index, record index, purpose tag, ...). Each path
//! element is folded in with the SplitMix64 finalizer, so sibling streams are
//! statistically independent and no stream depends on how work is scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Portable, platform-independent generator used for every draw.
pub type EngineRng = ChaCha8Rng;

/// Recorded in every report so a run can be reproduced bit-for-bit.
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.3) seeded from splitmix64-derived u64";

/// SplitMix64 output function (Steele, Lea & Flood). Bijective avalanche mixer.
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `master`: `h0 = mix(master)`, `h(i+1) = mix(h(i) ^ mix(path[i]))`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(master), |acc, &step| mix64(acc ^ mix64(step)))
}

/// Per-replication seed: `derive_seed(master, [replication])`.
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    derive_seed(master, &[replication])
}

pub fn stream(master: u64, path: &[u64]) -> EngineRng {
    EngineRng::seed_from_u64(derive_seed(master, path))
}

/// Purpose tags mixed into stream paths.
pub mod tag {
    pub const STUDENTS: u64 = 0x5354_5544;
    pub const QUESTIONS: u64 = 0x5155_4553;
    pub const PHASE1: u64 = 0x5048_3101;
    pub const FOLLOWUP: u64 = 0x464f_4c4c;
    pub const AI: u64 = 0x4149_5052;
    pub const HUMAN: u64 = 0x4855_4d4e;
    pub const ASSEMBLE: u64 = 0x4153_4d42;
    pub const CHOICE: u64 = 0x4348_4f43;
    pub const SALT: u64 = 0x5341_4c54;
    pub const COVERAGE: u64 = 0x434f_5652;
    pub const NULL: u64 = 0x4e55_4c4c;
    pub const ALTERNATIVE: u64 = 0x414c_5445;
}
