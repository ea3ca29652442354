//! Seeded synthetic image classification data.
//!
//! Each class owns a fixed random template; a sample is its class template plus
//! Gaussian pixel noise, clipped to [−1, 1].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_SHAPE: [usize; 3] = [3, 8, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise_std: f64,
    /// Amplitude of the class-specific part of each template relative to the
    /// pattern shared by all classes.
    pub contrast: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            n_train: 2000,
            n_test: 500,
            noise_std: 0.3,
            contrast: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// Shape [N, 3, 8, 8].
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub split: Split,
    pub seed: u64,
    pub classes: usize,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    /// Gathers the samples at `indices` into one batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let per = self.images.row_len();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let shape = [indices.len(), IMAGE_SHAPE[0], IMAGE_SHAPE[1], IMAGE_SHAPE[2]];
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (Tensor::from_vec(&shape, data).expect("consistent batch"), labels)
    }
}

/// Class templates for `seed`, each of [`IMAGE_SHAPE`].
pub fn templates(seed: u64, cfg: &DatasetConfig) -> Vec<Vec<f64>> {
    let len: usize = IMAGE_SHAPE.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..len).map(|_| rng.random_range(-0.5..0.5)).collect();
    (0..cfg.classes)
        .map(|_| {
            base.iter()
                .map(|b| (b + cfg.contrast * rng.random_range(-1.0..1.0)).clamp(-1.0, 1.0))
                .collect()
        })
        .collect()
}

fn sample_split(
    seed: u64,
    cfg: &DatasetConfig,
    templates: &[Vec<f64>],
    split: Split,
    n: usize,
) -> Result<SyntheticDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match split {
        Split::Train => 1,
        Split::Test => 2,
    });
    let noise = Normal::new(0.0, cfg.noise_std)
        .map_err(|e| Error::Config(format!("noise_std {}: {e}", cfg.noise_std)))?;
    let per: usize = IMAGE_SHAPE.iter().product();
    let mut data = Vec::with_capacity(n * per);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % cfg.classes;
        labels.push(c);
        data.extend(
            templates[c]
                .iter()
                .map(|t| (t + noise.sample(&mut rng)).clamp(-1.0, 1.0)),
        );
    }
    Ok(SyntheticDataset {
        images: Tensor::from_vec(&[n, IMAGE_SHAPE[0], IMAGE_SHAPE[1], IMAGE_SHAPE[2]], data)?,
        labels,
        split,
        seed,
        classes: cfg.classes,
    })
}

/// Train and test splits drawn from the same class templates.
pub fn make_dataset(seed: u64, cfg: &DatasetConfig) -> Result<(SyntheticDataset, SyntheticDataset)> {
    if cfg.classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {}", cfg.classes)));
    }
    if cfg.n_train == 0 || cfg.n_test == 0 {
        return Err(Error::Config("dataset splits must be non-empty".into()));
    }
    let t = templates(seed, cfg);
    Ok((
        sample_split(seed, cfg, &t, Split::Train, cfg.n_train)?,
        sample_split(seed, cfg, &t, Split::Test, cfg.n_test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let cfg = DatasetConfig::default();
        let (a, _) = make_dataset(3, &cfg).unwrap();
        let (b, _) = make_dataset(3, &cfg).unwrap();
        assert_eq!(a, b);
        let (c, _) = make_dataset(4, &cfg).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn zero_noise_reproduces_templates() {
        let cfg = DatasetConfig {
            noise_std: 0.0,
            n_train: 30,
            n_test: 10,
            ..DatasetConfig::default()
        };
        let t = templates(9, &cfg);
        let (train, test) = make_dataset(9, &cfg).unwrap();
        for ds in [&train, &test] {
            for i in 0..ds.len() {
                assert_eq!(ds.image(i), t[ds.labels[i]].as_slice());
            }
        }
    }

    #[test]
    fn classes_are_balanced() {
        let cfg = DatasetConfig {
            n_train: 1003,
            ..DatasetConfig::default()
        };
        let (train, _) = make_dataset(1, &cfg).unwrap();
        let mut counts = vec![0usize; cfg.classes];
        for &l in &train.labels {
            counts[l] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
        assert!(train.images.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_degenerate_configs() {
        let cfg = DatasetConfig {
            classes: 1,
            ..DatasetConfig::default()
        };
        assert!(make_dataset(0, &cfg).is_err());
    }
}
