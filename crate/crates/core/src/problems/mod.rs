//! Loss functions with stochastic gradient oracles, plus dataset ingestion
//! and sharding across workers.

mod idx;
mod logistic;
mod mlp;
mod quadratic;
mod synthetic;

pub use idx::{load_idx, write_idx_images, write_idx_labels, IdxError};
pub use logistic::LogisticProblem;
pub use mlp::MlpProblem;
pub use quadratic::QuadraticProblem;
pub use synthetic::{synthetic_images, SyntheticData, SyntheticSpec};

use rand::Rng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("worker {worker} out of range: problem has {shards} shards")]
    WorkerOutOfRange { worker: usize, shards: usize },
    #[error("cannot sample from an empty shard (worker {0})")]
    EmptyShard(usize),
    #[error("batch size must be >= 1")]
    EmptyBatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u8, classes: usize },
    #[error("cannot split {examples} examples across {workers} workers")]
    TooManyWorkers { workers: usize, examples: usize },
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("{0}")]
    Invalid(String),
}

/// Loss constants known by construction, when the problem has them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownConstants {
    pub l: f64,
    pub mu: f64,
    pub sigma_sq: f64,
    pub f_star: f64,
}

/// A training objective with full and stochastic gradient oracles.
///
/// All methods are pure in the parameters; the only mutable input is the
/// caller-owned RNG, so workers can evaluate concurrently.
pub trait Problem: Send + Sync {
    /// Flattened parameter count `d`.
    fn dim(&self) -> usize;

    /// Number of data shards, or `None` when any worker count works.
    fn shard_count(&self) -> Option<usize>;

    fn full_loss(&self, w: &[f64]) -> f64;

    fn full_gradient(&self, w: &[f64]) -> Vec<f64>;

    /// Full-batch gradient restricted to at most `per_shard_cap` examples of
    /// each shard; used as a cheap probe when estimating smoothness.
    fn probe_gradient(&self, w: &[f64], per_shard_cap: usize) -> Vec<f64> {
        let _ = per_shard_cap;
        self.full_gradient(w)
    }

    /// Minibatch loss and gradient for one worker's shard.
    fn stochastic_loss_gradient(
        &self,
        w: &[f64],
        worker: usize,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<f64>), ProblemError>;

    fn known_constants(&self) -> Option<KnownConstants> {
        None
    }

    /// Accuracy on the held-out set, when the problem carries one.
    fn test_accuracy(&self, w: &[f64]) -> Option<f64> {
        let _ = w;
        None
    }

    fn initial_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let _ = rng;
        vec![0.0; self.dim()]
    }
}

/// A dense feature matrix (row-major, `len x num_features`) with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    num_features: usize,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, num_features: usize, labels: Vec<u8>) -> Result<Self, ProblemError> {
        if num_features == 0 || features.len() != num_features * labels.len() {
            return Err(ProblemError::Invalid(format!(
                "feature buffer of {} values does not match {} examples x {} features",
                features.len(),
                labels.len(),
                num_features
            )));
        }
        Ok(Self {
            features,
            num_features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    /// Keeps only the first `n` examples.
    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            self.features.truncate(n * self.num_features);
            self.labels.truncate(n);
        }
    }
}

/// One worker's slice of the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShard {
    pub owner: usize,
    features: Vec<f64>,
    num_features: usize,
    labels: Vec<u8>,
}

impl DataShard {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }
}

/// Shuffles the dataset with a seeded RNG and splits it into `workers`
/// contiguous shards of equal size, remainder going to the last shard.
pub fn shard_dataset(
    dataset: &Dataset,
    workers: usize,
    seed: u64,
) -> Result<Vec<DataShard>, ProblemError> {
    if workers == 0 || workers > dataset.len() {
        return Err(ProblemError::TooManyWorkers {
            workers,
            examples: dataset.len(),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = dataset.len() / workers;
    let mut shards = Vec::with_capacity(workers);
    let mut cursor = 0;
    for owner in 0..workers {
        let take = if owner + 1 == workers {
            dataset.len() - cursor
        } else {
            base
        };
        let mut features = Vec::with_capacity(take * dataset.num_features());
        let mut labels = Vec::with_capacity(take);
        for &i in &order[cursor..cursor + take] {
            features.extend_from_slice(dataset.row(i));
            labels.push(dataset.label(i));
        }
        shards.push(DataShard {
            owner,
            features,
            num_features: dataset.num_features(),
            labels,
        });
        cursor += take;
    }
    Ok(shards)
}

/// Uniform sampling with replacement: `batch_size` row indices into the shard.
pub fn sample_minibatch(
    shard: &DataShard,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, ProblemError> {
    if batch_size == 0 {
        return Err(ProblemError::EmptyBatch);
    }
    if shard.is_empty() {
        return Err(ProblemError::EmptyShard(shard.owner));
    }
    Ok((0..batch_size)
        .map(|_| rng.random_range(0..shard.len()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(n: usize) -> Dataset {
        let features: Vec<f64> = (0..n * 2).map(|i| i as f64).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        Dataset::new(features, 2, labels).unwrap()
    }

    #[test]
    fn shard_sizes_even_split() {
        let shards = shard_dataset(&toy_dataset(100), 4, 3).unwrap();
        assert_eq!(shards.len(), 4);
        assert!(shards.iter().all(|s| s.len() == 25));
    }

    #[test]
    fn shard_remainder_goes_last() {
        let shards = shard_dataset(&toy_dataset(103), 4, 3).unwrap();
        assert_eq!(
            shards.iter().map(|s| s.len()).collect::<Vec<_>>(),
            vec![25, 25, 25, 28]
        );
    }

    #[test]
    fn single_shard_is_whole_dataset() {
        let ds = toy_dataset(10);
        let shards = shard_dataset(&ds, 1, 9).unwrap();
        assert_eq!(shards[0].len(), 10);
        let mut labels: Vec<u8> = (0..10).map(|i| shards[0].label(i)).collect();
        labels.sort_unstable();
        let mut expect: Vec<u8> = (0..10).map(|i| ds.label(i)).collect();
        expect.sort_unstable();
        assert_eq!(labels, expect);
    }

    #[test]
    fn sharding_is_deterministic() {
        let ds = toy_dataset(64);
        let a = shard_dataset(&ds, 4, 11).unwrap();
        let b = shard_dataset(&ds, 4, 11).unwrap();
        assert_eq!(a, b);
        let c = shard_dataset(&ds, 4, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shard_rejects_too_many_workers() {
        assert!(shard_dataset(&toy_dataset(3), 4, 0).is_err());
    }

    #[test]
    fn minibatch_reproducible_and_bounded() {
        let ds = toy_dataset(16);
        let shard = &shard_dataset(&ds, 2, 5).unwrap()[0];
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let a = sample_minibatch(shard, 8, &mut r1).unwrap();
        let b = sample_minibatch(shard, 8, &mut r2).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&i| i < shard.len()));
    }

    #[test]
    fn minibatch_singleton_repeats() {
        let ds = toy_dataset(4);
        let shards = shard_dataset(&ds, 4, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_minibatch(&shards[2], 5, &mut rng).unwrap();
        assert_eq!(batch, vec![0; 5]);
    }

    #[test]
    fn minibatch_error_paths() {
        let ds = toy_dataset(4);
        let shard = &shard_dataset(&ds, 2, 5).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_minibatch(shard, 0, &mut rng).is_err());
    }
}
