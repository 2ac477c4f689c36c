//! Reproducible random streams.
//!
//! Every random quantity in an experiment is drawn from a ChaCha8 stream whose
//! key is derived from a *seed path*: the base seed followed by the
//! coordinates of the work item (u index, outer trial, inner trial, stage).
//! The derivation is a chain of splitmix64 finalizers, so any single row can
//! be regenerated in isolation and the result does not depend on which thread
//! ran it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Placeholder coordinate for a path component that does not apply
/// (e.g. the inner trial of a weak-model row).
pub const NONE: u64 = u64::MAX;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `base`: `h = mix(base); h = mix(h ^ mix(c_i))` for each
/// component in order.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(base), |h, &c| mix64(h ^ mix64(c).rotate_left(17)))
}

/// Stage tags used as the final seed-path component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stage {
    WeakTrain = 1,
    Unlabeled = 2,
    Test = 3,
    WeakTest = 4,
    CleanTrain = 5,
    Tails = 6,
    Probe = 7,
}

/// A seeded random stream.
#[derive(Clone, Debug)]
pub struct Stream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_path(base: u64, path: &[u64]) -> Self {
        Self::new(derive_seed(base, path))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream; the parent is not advanced.
    pub fn substream(&self, path: &[u64]) -> Stream {
        Stream::from_path(self.seed, path)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = StandardNormal.sample(&mut self.rng);
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
