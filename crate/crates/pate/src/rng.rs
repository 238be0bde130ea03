//! Seeded randomness with a deterministic per-query derivation scheme.
//!
//! Every randomized operation takes an explicit [`RandomSource`]. A source is
//! single-consumer: concurrent or per-query use must derive independent child
//! sources via [`child_seed`], which mixes the root seed with the query's row
//! index so that each query's noise stream is independent of how many draws
//! earlier queries consumed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

/// SplitMix64 finalizer; a bijective 64-bit mix with good avalanche behavior.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derives the seed for one query's noise stream from the run's root seed and
/// the query's 0-based row index.
pub fn child_seed(root_seed: u64, index: u64) -> u64 {
    splitmix64(root_seed.wrapping_add(splitmix64(index)))
}

/// Deterministic stream of the noise primitives the mechanisms need.
///
/// Identical seed and call sequence produce identical outputs across runs and
/// platforms (ChaCha12 keystream; no platform-dependent paths).
pub struct RandomSource {
    rng: ChaCha12Rng,
}

impl RandomSource {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Child source for the query at `index` under `root_seed`.
    pub fn for_query(root_seed: u64, index: u64) -> Self {
        Self::from_seed(child_seed(root_seed, index))
    }

    /// One draw from N(0, 1).
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// One draw from the Laplace distribution with the given scale
    /// (density `exp(-|x|/scale) / (2 scale)`), via inverse-CDF sampling.
    pub fn laplace(&mut self, scale: f64) -> f64 {
        let u: f64 = self.rng.random::<f64>() - 0.5; // [-0.5, 0.5)
        let a = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
        -scale * u.signum() * a.ln()
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.random_range(0..n)
    }

    /// Binomial(n, p) draw.
    pub fn binomial(&mut self, n: u64, p: f64) -> u64 {
        if n == 0 || p <= 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        Binomial::new(n, p)
            .expect("validated parameters")
            .sample(&mut self.rng)
    }
}
