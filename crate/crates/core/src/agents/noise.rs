use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Zero-mean Gaussian exploration noise with per-episode exponential decay.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    sigma: f64,
    decay: f64,
    rng: ChaCha8Rng,
}

impl GaussianNoise {
    pub fn new(sigma: f64, decay: f64, seed: u64) -> Self {
        assert!(sigma >= 0.0 && (0.0..=1.0).contains(&decay), "bad noise parameters");
        Self {
            sigma,
            decay,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sample(&mut self, dim: usize) -> Vec<f64> {
        (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                self.sigma * z
            })
            .collect()
    }

    pub fn end_episode(&mut self) {
        self.sigma *= self.decay;
    }
}
