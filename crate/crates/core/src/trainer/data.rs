//! Synthetic 2-D Gaussian blobs with controllable class overlap.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DIMENSION: usize = 2;

/// Class centers sit evenly on a circle of radius `spread`; every class is
/// an isotropic Gaussian with standard deviation `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub spread: f64,
    pub scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Four classes; nearest-center (Bayes) accuracy is `Φ(√2)² ≈ 0.849`.
    fn default() -> Self {
        Self {
            num_classes: 4,
            samples_per_class: 500,
            spread: 2.0,
            scale: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 3 {
            return Err(Error::Config(format!("data.num_classes must be >= 3, got {}", self.num_classes)));
        }
        if self.samples_per_class < 10 {
            return Err(Error::Config(format!(
                "data.samples_per_class must be >= 10, got {}",
                self.samples_per_class
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("data.scale must be > 0, got {}", self.scale)));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::Config(format!("data.spread must be > 0, got {}", self.spread)));
        }
        Ok(())
    }

    pub fn centers(&self) -> Vec<[f64; DIMENSION]> {
        let k = self.num_classes as f64;
        (0..self.num_classes)
            .map(|c| {
                let angle = std::f64::consts::TAU * c as f64 / k;
                [self.spread * angle.cos(), self.spread * angle.sin()]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<[f64; DIMENSION]>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: idx.iter().map(|&i| self.features[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Draw the blobs, shuffle, and cut 70/10/20.
pub fn generate_blobs(spec: &SyntheticSpec) -> Result<Splits> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.scale).map_err(|e| Error::Config(e.to_string()))?;
    let centers = spec.centers();
    let total = spec.num_classes * spec.samples_per_class;
    let mut all = Dataset {
        features: Vec::with_capacity(total),
        labels: Vec::with_capacity(total),
        num_classes: spec.num_classes,
    };
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            all.features
                .push([center[0] + noise.sample(&mut rng), center[1] + noise.sample(&mut rng)]);
            all.labels.push(class);
        }
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let n_train = total * 7 / 10;
    let n_val = total / 10;
    Ok(Splits {
        train: all.subset(&order[..n_train]),
        val: all.subset(&order[n_train..n_train + n_val]),
        test: all.subset(&order[n_train + n_val..]),
    })
}
