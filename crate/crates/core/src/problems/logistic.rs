//! Logistic regression over sharded data.
//!
//! Binary labels use a single output block (`d = p + 1` with the bias), any
//! other class count uses multinomial softmax with one `p + 1` block per
//! class.

use rand_chacha::ChaCha8Rng;

use super::{sample_minibatch, DataShard, Dataset, Problem, ProblemError};

pub struct LogisticProblem {
    shards: Vec<DataShard>,
    test: Option<Dataset>,
    classes: usize,
    num_features: usize,
    dim: usize,
}

impl LogisticProblem {
    pub fn new(
        shards: Vec<DataShard>,
        classes: usize,
        test: Option<Dataset>,
    ) -> Result<Self, ProblemError> {
        if classes < 2 {
            return Err(ProblemError::Invalid(
                "logistic regression needs at least 2 classes".into(),
            ));
        }
        if shards.is_empty() {
            return Err(ProblemError::Invalid("no shards provided".into()));
        }
        let num_features = shards[0].num_features();
        for shard in &shards {
            if shard.num_features() != num_features {
                return Err(ProblemError::Invalid(
                    "shards disagree on feature width".into(),
                ));
            }
            for i in 0..shard.len() {
                let label = shard.label(i);
                if label as usize >= classes {
                    return Err(ProblemError::LabelOutOfRange { label, classes });
                }
            }
        }
        if let Some(test) = &test {
            for i in 0..test.len() {
                let label = test.label(i);
                if label as usize >= classes {
                    return Err(ProblemError::LabelOutOfRange { label, classes });
                }
            }
        }
        let blocks = if classes == 2 { 1 } else { classes };
        Ok(Self {
            dim: blocks * (num_features + 1),
            shards,
            test,
            classes,
            num_features,
        })
    }

    fn binary(&self) -> bool {
        self.classes == 2
    }

    /// Adds one example's loss to `loss` and its gradient into `grad`
    /// (scaled by `weight`).
    fn accumulate_example(&self, w: &[f64], x: &[f64], y: u8, weight: f64, grad: &mut [f64]) -> f64 {
        let p = self.num_features;
        if self.binary() {
            let mut z = w[p];
            for (wi, xi) in w[..p].iter().zip(x) {
                z += wi * xi;
            }
            let y = y as f64;
            // ln(1 + e^z) - y*z, computed stably.
            let loss = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            let sigma = if z >= 0.0 {
                1.0 / (1.0 + (-z).exp())
            } else {
                let e = z.exp();
                e / (1.0 + e)
            };
            let coeff = (sigma - y) * weight;
            for (g, xi) in grad[..p].iter_mut().zip(x) {
                *g += coeff * xi;
            }
            grad[p] += coeff;
            loss
        } else {
            let c = self.classes;
            let block = p + 1;
            let mut scores = vec![0.0; c];
            for (ci, s) in scores.iter_mut().enumerate() {
                let wc = &w[ci * block..(ci + 1) * block];
                let mut z = wc[p];
                for (wi, xi) in wc[..p].iter().zip(x) {
                    z += wi * xi;
                }
                *s = z;
            }
            let zmax = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = scores.iter().map(|&z| (z - zmax).exp()).sum();
            let log_sum = zmax + sum_exp.ln();
            let loss = log_sum - scores[y as usize];
            for (ci, &z) in scores.iter().enumerate() {
                let prob = (z - zmax).exp() / sum_exp;
                let indicator = if ci == y as usize { 1.0 } else { 0.0 };
                let coeff = (prob - indicator) * weight;
                let gc = &mut grad[ci * block..(ci + 1) * block];
                for (g, xi) in gc[..p].iter_mut().zip(x) {
                    *g += coeff * xi;
                }
                gc[p] += coeff;
            }
            loss
        }
    }

    fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        let p = self.num_features;
        if self.binary() {
            let mut z = w[p];
            for (wi, xi) in w[..p].iter().zip(x) {
                z += wi * xi;
            }
            usize::from(z > 0.0)
        } else {
            let block = p + 1;
            let mut best = 0;
            let mut best_z = f64::NEG_INFINITY;
            for ci in 0..self.classes {
                let wc = &w[ci * block..(ci + 1) * block];
                let mut z = wc[p];
                for (wi, xi) in wc[..p].iter().zip(x) {
                    z += wi * xi;
                }
                if z > best_z {
                    best_z = z;
                    best = ci;
                }
            }
            best
        }
    }

    /// Mean loss/gradient over the first `cap` examples of each shard,
    /// averaged across shards.
    fn capped_loss_gradient(&self, w: &[f64], cap: usize) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.dim];
        let mut loss = 0.0;
        let workers = self.shards.len() as f64;
        for shard in &self.shards {
            let take = shard.len().min(cap);
            if take == 0 {
                continue;
            }
            let weight = 1.0 / (take as f64 * workers);
            let mut shard_loss = 0.0;
            for i in 0..take {
                shard_loss += self.accumulate_example(w, shard.row(i), shard.label(i), weight, &mut grad);
            }
            loss += shard_loss / take as f64;
        }
        (loss / workers, grad)
    }
}

impl Problem for LogisticProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn shard_count(&self) -> Option<usize> {
        Some(self.shards.len())
    }

    fn full_loss(&self, w: &[f64]) -> f64 {
        self.capped_loss_gradient(w, usize::MAX).0
    }

    fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        self.capped_loss_gradient(w, usize::MAX).1
    }

    fn probe_gradient(&self, w: &[f64], per_shard_cap: usize) -> Vec<f64> {
        self.capped_loss_gradient(w, per_shard_cap.max(1)).1
    }

    fn stochastic_loss_gradient(
        &self,
        w: &[f64],
        worker: usize,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<f64>), ProblemError> {
        let shard = self
            .shards
            .get(worker)
            .ok_or(ProblemError::WorkerOutOfRange {
                worker,
                shards: self.shards.len(),
            })?;
        let batch = sample_minibatch(shard, batch_size, rng)?;
        let mut grad = vec![0.0; self.dim];
        let weight = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for i in batch {
            loss += self.accumulate_example(w, shard.row(i), shard.label(i), weight, &mut grad);
        }
        Ok((loss * weight, grad))
    }

    fn test_accuracy(&self, w: &[f64]) -> Option<f64> {
        let test = self.test.as_ref()?;
        if test.is_empty() {
            return None;
        }
        let correct = (0..test.len())
            .filter(|&i| self.predict(w, test.row(i)) == test.label(i) as usize)
            .count();
        Some(correct as f64 / test.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::shard_dataset;
    use approx::assert_relative_eq;
    use rand_chacha::rand_core::SeedableRng;

    fn binary_problem() -> LogisticProblem {
        // Two separable clusters along the first feature.
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..8 {
            let y = (i % 2) as u8;
            let x0 = if y == 1 { 1.0 } else { -1.0 };
            features.extend_from_slice(&[x0, 0.5]);
            labels.push(y);
        }
        let ds = Dataset::new(features, 2, labels).unwrap();
        LogisticProblem::new(shard_dataset(&ds, 2, 1).unwrap(), 2, None).unwrap()
    }

    #[test]
    fn binary_dim_is_p_plus_one() {
        assert_eq!(binary_problem().dim(), 3);
    }

    #[test]
    fn loss_at_zero_is_ln2() {
        let p = binary_problem();
        assert_relative_eq!(p.full_loss(&vec![0.0; 3]), (2.0f64).ln(), max_relative = 1e-12);
    }

    #[test]
    fn multiclass_loss_at_zero_is_ln_c() {
        let features = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let ds = Dataset::new(features, 2, vec![0, 1, 2]).unwrap();
        let p = LogisticProblem::new(shard_dataset(&ds, 1, 0).unwrap(), 3, None).unwrap();
        assert_eq!(p.dim(), 9);
        assert_relative_eq!(p.full_loss(&vec![0.0; 9]), (3.0f64).ln(), max_relative = 1e-12);
    }

    #[test]
    fn gradient_at_zero_single_positive_example() {
        let ds = Dataset::new(vec![0.4, -0.2], 2, vec![1]).unwrap();
        let p = LogisticProblem::new(shard_dataset(&ds, 1, 0).unwrap(), 2, None).unwrap();
        let g = p.full_gradient(&vec![0.0; 3]);
        // sigma(0) = 1/2, so the gradient is -x/2 (bias included).
        assert_relative_eq!(g[0], -0.2, max_relative = 1e-12);
        assert_relative_eq!(g[1], 0.1, max_relative = 1e-12);
        assert_relative_eq!(g[2], -0.5, max_relative = 1e-12);
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let ds = Dataset::new(vec![0.0, 0.0], 2, vec![5]).unwrap();
        let shards = shard_dataset(&ds, 1, 0).unwrap();
        assert!(LogisticProblem::new(shards, 3, None).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        use rand_distr::{Distribution, StandardNormal};
        for i in 0..30 {
            for _ in 0..4 {
                let v: f64 = StandardNormal.sample(&mut rng);
                features.push(v);
            }
            labels.push((i % 3) as u8);
        }
        let ds = Dataset::new(features, 4, labels).unwrap();
        let p = LogisticProblem::new(shard_dataset(&ds, 2, 1).unwrap(), 3, None).unwrap();
        let w: Vec<f64> = (0..p.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let g = p.full_gradient(&w);
        let h = 1e-6;
        for idx in [0, 3, 7, 10, p.dim() - 1] {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[idx] += h;
            wm[idx] -= h;
            let fd = (p.full_loss(&wp) - p.full_loss(&wm)) / (2.0 * h);
            assert!(
                (fd - g[idx]).abs() <= 1e-5 * (1.0 + fd.abs().max(g[idx].abs())),
                "coordinate {idx}: fd {fd} vs analytic {}",
                g[idx]
            );
        }
    }

    #[test]
    fn stochastic_mean_tracks_shard_gradient() {
        let p = binary_problem();
        let w = vec![0.2, -0.1, 0.05];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 4000;
        let mut mean = vec![0.0; 3];
        for _ in 0..draws {
            let (_, g) = p.stochastic_loss_gradient(&w, 0, 2, &mut rng).unwrap();
            for (m, gi) in mean.iter_mut().zip(&g) {
                *m += gi / draws as f64;
            }
        }
        // The per-shard full gradient, reconstructed via the capped path.
        let shard = &p.shards[0];
        let mut expect = vec![0.0; 3];
        for i in 0..shard.len() {
            p.accumulate_example(&w, shard.row(i), shard.label(i), 1.0 / shard.len() as f64, &mut expect);
        }
        for i in 0..3 {
            assert!(
                (mean[i] - expect[i]).abs() < 0.05,
                "coordinate {i}: {} vs {}",
                mean[i],
                expect[i]
            );
        }
    }
}
