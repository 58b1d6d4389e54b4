//! Seeded synthetic classification data for tests and desk-scale experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{DataError, Dataset};

/// Gaussian class clusters: each class has a random centre in the first
/// `n_informative` coordinates (scaled by `separation`); every coordinate
/// carries unit Gaussian noise, and `n_noise` extra coordinates are pure noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Blobs {
    pub n_classes: usize,
    pub n_informative: usize,
    pub n_noise: usize,
    pub separation: f64,
    /// Seed for the class centres; samples use their own seed.
    pub seed: u64,
}

impl Blobs {
    fn centres(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_classes)
            .map(|_| {
                (0..self.n_informative)
                    .map(|_| self.separation * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    }

    /// `n` samples with classes assigned round-robin.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset, DataError> {
        let centres = self.centres();
        let d = self.n_informative + self.n_noise;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut columns = vec![Vec::with_capacity(n); d];
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % self.n_classes;
            labels.push(c as u32);
            for (j, col) in columns.iter_mut().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                let centre = centres[c].get(j).copied().unwrap_or(0.0);
                col.push(centre + noise);
            }
        }
        Dataset::new(columns, labels, self.n_classes)
    }
}

/// Classes given by the argmax of random affine functions of a point drawn
/// uniformly from `[-1, 1]^d`; points whose top two scores differ by less
/// than `margin` are rejected, so the classes are linearly separable with a
/// gap.
#[derive(Debug, Clone, PartialEq)]
pub struct Separable {
    pub n_classes: usize,
    pub n_features: usize,
    pub margin: f64,
    pub seed: u64,
}

impl Separable {
    fn planes(&self) -> Vec<(Vec<f64>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_classes)
            .map(|_| {
                let w = (0..self.n_features).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                (w, 0.2 * rng.sample::<f64, _>(StandardNormal))
            })
            .collect()
    }

    /// `n` samples; each class is drawn in turn by rejection.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset, DataError> {
        let planes = self.planes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_7cc1_b727_220a);
        let mut columns = vec![Vec::with_capacity(n); self.n_features];
        let mut labels = Vec::with_capacity(n);
        let mut x = vec![0.0; self.n_features];
        let mut tries = 0usize;
        while labels.len() < n {
            tries += 1;
            if tries > 10_000 * (n + 1) {
                return Err(DataError::Invalid("separable generator: margin too large".into()));
            }
            let want = labels.len() % self.n_classes;
            for v in x.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let mut scores: Vec<(f64, usize)> = planes
                .iter()
                .enumerate()
                .map(|(c, (w, b))| (w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + b, c))
                .collect();
            scores.sort_by(|a, b| b.0.total_cmp(&a.0));
            if scores[0].1 != want || scores[0].0 - scores[1].0 < self.margin {
                continue;
            }
            labels.push(want as u32);
            for (col, &v) in columns.iter_mut().zip(&x) {
                col.push(v);
            }
        }
        Dataset::new(columns, labels, self.n_classes)
    }
}
