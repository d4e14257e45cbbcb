//! Synthetic quadratic objective with exactly known constants.
//!
//! `F(w) = (lambda/2) ||w - w*||^2` is `lambda`-smooth and satisfies the
//! gradient-dominance inequality with `mu = lambda` (with equality), so it
//! exercises every bound evaluator without estimation error.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{KnownConstants, Problem, ProblemError};

pub struct QuadraticProblem {
    dim: usize,
    lambda: f64,
    sigma_sq: f64,
    w_star: Vec<f64>,
}

impl QuadraticProblem {
    /// `lambda > 0` is the curvature, `sigma_sq >= 0` the total variance of
    /// the isotropic Gaussian gradient noise, and `seed` fixes the optimum.
    pub fn new(dim: usize, lambda: f64, sigma_sq: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_star = (0..dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Self {
            dim,
            lambda,
            sigma_sq,
            w_star,
        }
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }
}

impl Problem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn shard_count(&self) -> Option<usize> {
        None
    }

    fn full_loss(&self, w: &[f64]) -> f64 {
        let dist_sq: f64 = w
            .iter()
            .zip(&self.w_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        0.5 * self.lambda * dist_sq
    }

    fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(&self.w_star)
            .map(|(a, b)| self.lambda * (a - b))
            .collect()
    }

    fn stochastic_loss_gradient(
        &self,
        w: &[f64],
        _worker: usize,
        _batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<f64>), ProblemError> {
        let mut grad = self.full_gradient(w);
        if self.sigma_sq > 0.0 {
            // Per-coordinate variance sigma^2/d gives total variance sigma^2.
            let noise = Normal::new(0.0, (self.sigma_sq / self.dim as f64).sqrt())
                .expect("valid std dev");
            for g in &mut grad {
                *g += noise.sample(rng);
            }
        }
        Ok((self.full_loss(w), grad))
    }

    fn known_constants(&self) -> Option<KnownConstants> {
        Some(KnownConstants {
            l: self.lambda,
            mu: self.lambda,
            sigma_sq: self.sigma_sq,
            f_star: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_problem() -> QuadraticProblem {
        // w* = 0 for closed-form checks.
        QuadraticProblem {
            dim: 2,
            lambda: 1.0,
            sigma_sq: 0.0,
            w_star: vec![0.0, 0.0],
        }
    }

    #[test]
    fn loss_and_gradient_closed_form() {
        let p = unit_problem();
        let w = [2.0, 0.0];
        assert_relative_eq!(p.full_loss(&w), 2.0);
        assert_eq!(p.full_gradient(&w), vec![2.0, 0.0]);
    }

    #[test]
    fn gradient_dominance_holds_with_equality() {
        let p = QuadraticProblem::new(20, 2.5, 0.0, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let w: Vec<f64> = (0..20).map(|_| StandardNormal.sample(&mut rng)).collect();
            let g = p.full_gradient(&w);
            let g_sq: f64 = g.iter().map(|x| x * x).sum();
            assert_relative_eq!(g_sq, 2.0 * 2.5 * p.full_loss(&w), max_relative = 1e-12);
        }
    }

    #[test]
    fn noise_variance_matches_sigma_sq() {
        let sigma_sq = 0.8;
        let p = QuadraticProblem::new(16, 1.0, sigma_sq, 7);
        let w = vec![0.0; 16];
        let clean = p.full_gradient(&w);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 10_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let (_, g) = p.stochastic_loss_gradient(&w, 0, 1, &mut rng).unwrap();
            total += g
                .iter()
                .zip(&clean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let empirical = total / draws as f64;
        assert!(
            (empirical - sigma_sq).abs() / sigma_sq < 0.05,
            "empirical variance {empirical} not within 5% of {sigma_sq}"
        );
    }

    #[test]
    fn smoothness_is_exact() {
        let p = QuadraticProblem::new(8, 3.0, 0.0, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
        let gx = p.full_gradient(&x);
        let gy = p.full_gradient(&y);
        let grad_dist: f64 = gx
            .iter()
            .zip(&gy)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let point_dist: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert_relative_eq!(grad_dist, 3.0 * point_dist, max_relative = 1e-12);
    }
}
