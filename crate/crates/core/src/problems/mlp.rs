//! One-hidden-layer network: ReLU activation, softmax cross-entropy.
//!
//! Parameters are flattened as `[W1 (h x p), b1 (h), W2 (c x h), b2 (c)]`,
//! so `d = p*h + h + h*c + c`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{sample_minibatch, DataShard, Dataset, Problem, ProblemError};

pub struct MlpProblem {
    shards: Vec<DataShard>,
    test: Option<Dataset>,
    hidden: usize,
    classes: usize,
    num_features: usize,
    dim: usize,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

impl MlpProblem {
    pub fn new(
        shards: Vec<DataShard>,
        hidden: usize,
        classes: usize,
        test: Option<Dataset>,
    ) -> Result<Self, ProblemError> {
        if hidden == 0 {
            return Err(ProblemError::Invalid("hidden width must be >= 1".into()));
        }
        if classes < 2 {
            return Err(ProblemError::Invalid("need at least 2 classes".into()));
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
        let dim = num_features * hidden + hidden + hidden * classes + classes;
        Ok(Self {
            shards,
            test,
            hidden,
            classes,
            num_features,
            dim,
        })
    }

    fn layout(&self) -> Layout {
        let w1 = 0;
        let b1 = w1 + self.num_features * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.classes;
        Layout { w1, b1, w2, b2 }
    }

    fn forward(&self, w: &[f64], x: &[f64], z1: &mut [f64], a1: &mut [f64], scores: &mut [f64]) {
        let lay = self.layout();
        let p = self.num_features;
        for j in 0..self.hidden {
            let row = &w[lay.w1 + j * p..lay.w1 + (j + 1) * p];
            let mut z = w[lay.b1 + j];
            for (wi, xi) in row.iter().zip(x) {
                z += wi * xi;
            }
            z1[j] = z;
            a1[j] = z.max(0.0);
        }
        for c in 0..self.classes {
            let row = &w[lay.w2 + c * self.hidden..lay.w2 + (c + 1) * self.hidden];
            let mut z = w[lay.b2 + c];
            for (wi, ai) in row.iter().zip(a1.iter()) {
                z += wi * ai;
            }
            scores[c] = z;
        }
    }

    /// Adds one example's loss (returned) and gradient (into `grad`, scaled
    /// by `weight`).
    fn accumulate_example(&self, w: &[f64], x: &[f64], y: u8, weight: f64, grad: &mut [f64]) -> f64 {
        let lay = self.layout();
        let p = self.num_features;
        let h = self.hidden;
        let c = self.classes;
        let mut z1 = vec![0.0; h];
        let mut a1 = vec![0.0; h];
        let mut scores = vec![0.0; c];
        self.forward(w, x, &mut z1, &mut a1, &mut scores);
        let zmax = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = scores.iter().map(|&z| (z - zmax).exp()).sum();
        let loss = zmax + sum_exp.ln() - scores[y as usize];

        let mut dz2 = vec![0.0; c];
        for ci in 0..c {
            let prob = (scores[ci] - zmax).exp() / sum_exp;
            dz2[ci] = prob - if ci == y as usize { 1.0 } else { 0.0 };
        }
        let mut da1 = vec![0.0; h];
        for ci in 0..c {
            let coeff = dz2[ci] * weight;
            let w2_row = &w[lay.w2 + ci * h..lay.w2 + (ci + 1) * h];
            let g2_row = &mut grad[lay.w2 + ci * h..lay.w2 + (ci + 1) * h];
            for j in 0..h {
                g2_row[j] += coeff * a1[j];
                da1[j] += dz2[ci] * w2_row[j];
            }
            grad[lay.b2 + ci] += coeff;
        }
        for j in 0..h {
            if z1[j] <= 0.0 {
                continue;
            }
            let coeff = da1[j] * weight;
            let g1_row = &mut grad[lay.w1 + j * p..lay.w1 + (j + 1) * p];
            for (g, xi) in g1_row.iter_mut().zip(x) {
                *g += coeff * xi;
            }
            grad[lay.b1 + j] += coeff;
        }
        loss
    }

    fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        let mut z1 = vec![0.0; self.hidden];
        let mut a1 = vec![0.0; self.hidden];
        let mut scores = vec![0.0; self.classes];
        self.forward(w, x, &mut z1, &mut a1, &mut scores);
        scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

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

impl Problem for MlpProblem {
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

    fn initial_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        // Uniform Glorot ranges; biases start at zero.
        let lay = self.layout();
        let mut w = vec![0.0; self.dim];
        let s1 = (6.0 / (self.num_features + self.hidden) as f64).sqrt();
        for v in &mut w[lay.w1..lay.b1] {
            *v = rng.random_range(-s1..s1);
        }
        let s2 = (6.0 / (self.hidden + self.classes) as f64).sqrt();
        for v in &mut w[lay.w2..lay.b2] {
            *v = rng.random_range(-s2..s2);
        }
        w
    }
}
