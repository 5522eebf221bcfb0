//! Reproducible Monte Carlo plumbing.
//!
//! Every stochastic routine takes an explicit `u64` seed. Work is split into fixed-size chunks,
//! each driven by its own ChaCha stream seeded from `(seed, chunk index)`, and partial results
//! are combined in chunk order. Results therefore do not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type Rng = ChaCha8Rng;

/// Trials per independently seeded chunk.
pub const CHUNK: usize = 4096;

/// Mixes a master seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_moments(sum: f64, sum_sq: f64, samples: usize) -> Self {
        let n = samples as f64;
        let mean = sum / n;
        let var = if samples > 1 {
            ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        McEstimate {
            mean,
            std_error: (var / n).sqrt(),
            samples,
        }
    }

    pub fn from_values(values: &[f64]) -> Self {
        let sum: f64 = values.iter().sum();
        let sum_sq: f64 = values.iter().map(|v| v * v).sum();
        Self::from_moments(sum, sum_sq, values.len())
    }

    /// Binomial proportion `hits / samples` with standard error `sqrt(p(1-p)/n)`.
    pub fn proportion(hits: u64, samples: usize) -> Self {
        let n = samples as f64;
        let p = hits as f64 / n;
        McEstimate {
            mean: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
            samples,
        }
    }

    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

/// Runs `trials` Monte Carlo trials in seeded chunks and folds per-chunk accumulators in order.
pub fn run_chunked<A, F, G>(trials: usize, seed: u64, init: A, chunk_fn: F, fold: G) -> A
where
    A: Send,
    F: Fn(&mut Rng, usize) -> A + Sync,
    G: Fn(A, A) -> A,
{
    let chunks = trials.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(trials - c * CHUNK);
            let mut rng = rng(derive_seed(seed, c as u64));
            chunk_fn(&mut rng, count)
        })
        .collect();
    parts.into_iter().fold(init, fold)
}

/// Counts trials for which `event` fires.
pub fn estimate_probability<F>(trials: usize, seed: u64, event: F) -> McEstimate
where
    F: Fn(&mut Rng) -> bool + Sync,
{
    let hits = run_chunked(
        trials,
        seed,
        0u64,
        |rng, count| (0..count).filter(|_| event(rng)).count() as u64,
        |a, b| a + b,
    );
    McEstimate::proportion(hits, trials)
}

/// Mean of `sample` over `trials` draws.
pub fn estimate_mean<F>(trials: usize, seed: u64, sample: F) -> McEstimate
where
    F: Fn(&mut Rng) -> f64 + Sync,
{
    let (sum, sum_sq) = run_chunked(
        trials,
        seed,
        (0.0, 0.0),
        |rng, count| {
            (0..count).fold((0.0, 0.0), |(s, q), _| {
                let v = sample(rng);
                (s + v, q + v * v)
            })
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
    );
    McEstimate::from_moments(sum, sum_sq, trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn seeds_differ_per_index() {
        let a = derive_seed(7, 0);
        let b = derive_seed(7, 1);
        let c = derive_seed(8, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn chunked_estimates_are_reproducible() {
        let f = |rng: &mut Rng| rng.random::<f64>() < 0.3;
        let a = estimate_probability(20_000, 11, f);
        let b = estimate_probability(20_000, 11, f);
        assert_eq!(a, b);
        assert!(a.within(0.3, 4.0));
    }

    #[test]
    fn mean_estimate_of_uniform() {
        let e = estimate_mean(50_000, 3, |rng| rng.random::<f64>());
        assert!(e.within(0.5, 4.0));
        assert!((e.std_error - (1.0f64 / 12.0 / 50_000.0).sqrt()).abs() < 1e-4);
    }
}
