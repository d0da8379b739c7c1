//! Seeded randomness.
//!
//! All randomness flows through [`Rng`], a thin wrapper over ChaCha8 (the
//! `rand_chacha` counter-mode stream cipher generator). ChaCha output is
//! specified bit-for-bit, so identical seeds give identical streams on every
//! platform. Child streams are derived with [`derive_seed`], a SplitMix64
//! finalizer over `(parent, label)`; work that fans out per asset or per run
//! derives its own seed instead of sharing a generator.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and an integer label.
///
/// `derive_seed(s, a) != derive_seed(s, b)` for `a != b` with overwhelming
/// probability, and the mapping is a pure function of its inputs.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ label.wrapping_mul(GOLDEN_GAMMA))
}

/// Derive a child seed from a parent seed and a string label.
pub fn derive_seed_str(parent: u64, label: &str) -> u64 {
    // FNV-1a over the bytes, then mixed with the parent.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    derive_seed(parent, h)
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A generator on an independent stream, labelled by `label`.
    pub fn fork(&self, label: u64) -> Rng {
        Rng::new(derive_seed(self.seed, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        self.inner.gen_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }

    /// `k` distinct indices from `0..n`, in ascending order.
    pub fn choose_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut idx: Vec<usize> = rand::seq::index::sample(&mut self.inner, n, k).into_vec();
        idx.sort_unstable();
        idx
    }
}
