//! Deterministic MNIST-shaped stand-in dataset.
//!
//! Ten classes of 28x28 "digits": each class is a fixed template of a few
//! Gaussian blobs, and each example is the template under a random global
//! intensity plus per-pixel noise, quantized to bytes. Useful when the real
//! IDX files are not on disk; the generator plus [`super::write_idx_images`]
//! produces files the normal ingestion path can read.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;

const SIDE: usize = 28;

#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
    /// Per-pixel Gaussian noise level; larger is harder.
    pub noise: f64,
    /// Fraction of training labels resampled uniformly at random.
    pub label_noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            train: 10_000,
            test: 2_000,
            seed: 5,
            noise: 0.5,
            label_noise: 0.05,
        }
    }
}

fn class_templates(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    // A strong shared background keeps the classes overlapping. Each class
    // differs by a couple of faint coarse blobs (learned quickly) plus a
    // low-amplitude micro-pattern scattered over many pixels: a long tail of
    // weakly informative coordinates that is only resolved late in training.
    let mut background = vec![0.0; SIDE * SIDE];
    for _ in 0..4 {
        add_blob(&mut background, rng, 0.6);
    }
    (0..spec.classes)
        .map(|_| {
            let mut t = background.clone();
            for _ in 0..2 {
                add_blob(&mut t, rng, 0.3);
            }
            for _ in 0..300 {
                let pixel = rng.random_range(0..SIDE * SIDE);
                t[pixel] += rng.random_range(-0.12..0.12);
            }
            for v in &mut t {
                *v = v.clamp(0.0, 1.0);
            }
            t
        })
        .collect()
}

fn add_blob(canvas: &mut [f64], rng: &mut ChaCha8Rng, max_amp: f64) {
    let cx = rng.random_range(4.0..24.0);
    let cy = rng.random_range(4.0..24.0);
    let amp = rng.random_range(0.5 * max_amp..max_amp);
    let radius = rng.random_range(2.0..5.0);
    let inv = 1.0 / (2.0 * radius * radius);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            canvas[y * SIDE + x] += amp * (-(dx * dx + dy * dy) * inv).exp();
        }
    }
}

fn draw_examples(
    n: usize,
    templates: &[Vec<f64>],
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<u8>, Vec<u8>) {
    let pixel_noise = Normal::new(0.0, noise).expect("valid std dev");
    let mut pixels = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let class = rng.random_range(0..templates.len());
        let intensity = rng.random_range(0.5..1.0);
        for &t in &templates[class] {
            let v = (intensity * t + pixel_noise.sample(rng)).clamp(0.0, 1.0);
            pixels.push((v * 255.0).round() as u8);
        }
        labels.push(class as u8);
    }
    (pixels, labels)
}

/// Generates `(train, test)` datasets plus the raw pixel/label bytes so the
/// caller can also persist them as IDX files.
pub fn synthetic_images(spec: &SyntheticSpec) -> SyntheticData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let templates = class_templates(spec, &mut rng);
    let (train_pixels, mut train_labels) =
        draw_examples(spec.train, &templates, spec.noise, &mut rng);
    // Label noise on the training side only: it pins the loss floor above
    // zero without obscuring the test-side comparison.
    if spec.label_noise > 0.0 {
        for label in &mut train_labels {
            if rng.random_range(0.0..1.0) < spec.label_noise {
                *label = rng.random_range(0..spec.classes) as u8;
            }
        }
    }
    let (test_pixels, test_labels) = draw_examples(spec.test, &templates, spec.noise, &mut rng);
    let to_dataset = |pixels: &[u8], labels: &[u8]| {
        let features = pixels.iter().map(|&b| b as f64 / 255.0).collect();
        Dataset::new(features, SIDE * SIDE, labels.to_vec()).expect("consistent sizes")
    };
    SyntheticData {
        train: to_dataset(&train_pixels, &train_labels),
        test: to_dataset(&test_pixels, &test_labels),
        train_pixels,
        train_labels,
        test_pixels,
        test_labels,
        side: SIDE,
    }
}

pub struct SyntheticData {
    pub train: Dataset,
    pub test: Dataset,
    pub train_pixels: Vec<u8>,
    pub train_labels: Vec<u8>,
    pub test_pixels: Vec<u8>,
    pub test_labels: Vec<u8>,
    pub side: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            train: 50,
            test: 10,
            ..Default::default()
        };
        let a = synthetic_images(&spec);
        let b = synthetic_images(&spec);
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn shapes_and_label_range() {
        let spec = SyntheticSpec {
            classes: 4,
            train: 30,
            test: 12,
            seed: 9,
            noise: 0.2,
            label_noise: 0.0,
        };
        let data = synthetic_images(&spec);
        assert_eq!(data.train.len(), 30);
        assert_eq!(data.test.len(), 12);
        assert_eq!(data.train.num_features(), 784);
        for i in 0..data.train.len() {
            assert!(data.train.label(i) < 4);
        }
    }
}
