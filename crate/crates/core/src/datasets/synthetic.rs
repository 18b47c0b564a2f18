//! Gaussian-mixture stand-in for real malware feature sets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassSizes {
    Uniform(usize),
    PerClass(Vec<usize>),
}

impl ClassSizes {
    pub fn size(&self, class: usize) -> usize {
        match self {
            ClassSizes::Uniform(n) => *n,
            ClassSizes::PerClass(v) => v[class],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub feature_dim: usize,
    pub samples_per_class: ClassSizes,
    #[serde(default = "default_std")]
    pub cluster_std: f64,
    pub cluster_separation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_std() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn new(
        class_count: usize,
        feature_dim: usize,
        samples_per_class: usize,
        cluster_separation: f64,
        seed: u64,
    ) -> Self {
        Self {
            class_count,
            feature_dim,
            samples_per_class: ClassSizes::Uniform(samples_per_class),
            cluster_std: 1.0,
            cluster_separation,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 {
            return Err(Error::config("synthetic.class_count must be positive"));
        }
        if self.feature_dim < 2 {
            return Err(Error::config("synthetic.feature_dim must be at least 2"));
        }
        if let ClassSizes::PerClass(v) = &self.samples_per_class {
            if v.len() != self.class_count {
                return Err(Error::config(format!(
                    "synthetic.samples_per_class lists {} sizes for {} classes",
                    v.len(),
                    self.class_count
                )));
            }
        }
        if (0..self.class_count).any(|c| self.samples_per_class.size(c) < 2) {
            return Err(Error::config("synthetic.samples_per_class must be at least 2"));
        }
        if !(self.cluster_std > 0.0) || !(self.cluster_separation >= 0.0) {
            return Err(Error::config("synthetic cluster_std must be > 0 and separation >= 0"));
        }
        Ok(())
    }
}

/// Cluster centres: random vertices of `{-1, 1}^m`, rescaled so that the mean
/// pairwise centre distance equals `cluster_separation * cluster_std`.
pub fn cluster_centers(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let (n, m) = (spec.class_count, spec.feature_dim);
    let mut centers: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..n {
        for b in a + 1..n {
            total += euclid(&centers[a], &centers[b]);
            pairs += 1;
        }
    }
    let target = spec.cluster_separation * spec.cluster_std;
    let scale = if pairs > 0 && total > 0.0 {
        target / (total / pairs as f64)
    } else {
        0.0
    };
    for c in &mut centers {
        c.iter_mut().for_each(|v| *v *= scale);
    }
    centers
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Draws the mixture. Deterministic in `spec.seed`; samples are shuffled.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = cluster_centers(spec, &mut rng);
    let m = spec.feature_dim;
    let mut rows: Vec<(Vec<f32>, usize)> = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class.size(c) {
            let x = center
                .iter()
                .map(|&mu| {
                    let z: f64 = rng.sample(StandardNormal);
                    (mu + spec.cluster_std * z) as f32
                })
                .collect();
            rows.push((x, c));
        }
    }
    rows.shuffle(&mut rng);
    let mut features = Vec::with_capacity(rows.len() * m);
    let mut labels = Vec::with_capacity(rows.len());
    for (x, y) in rows {
        features.extend(x);
        labels.push(y);
    }
    Dataset::new(m, spec.class_count, features, labels)
}
