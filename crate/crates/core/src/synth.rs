//! Seeded synthetic data: a class-imbalanced Gaussian pair with sparse
//! background features and a few rare, strongly informative coordinates.
//!
//! Coordinates `0..informative` are the rare ones: each appears in an
//! instance with probability `rare_frequency` and then carries
//! `y·rare_signal + rare_noise·N(0, 1)`. Every other coordinate appears with
//! probability `density` and carries `y·s_i·background_shift + N(0, 1)`,
//! where `s_i` alternates sign across coordinates.

use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, Label, SparseVector};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub instances: usize,
    pub dimension: usize,
    /// Exactly `round(instances · positive_fraction)` positives are drawn.
    pub positive_fraction: f64,
    /// Probability that a background coordinate is present.
    pub density: f64,
    pub informative: usize,
    /// Probability that an informative coordinate is present.
    pub rare_frequency: f64,
    pub rare_signal: f64,
    /// Standard deviation of the noise on informative coordinates.
    pub rare_noise: f64,
    pub background_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            instances: 1000,
            dimension: 100,
            positive_fraction: 0.3,
            density: 0.1,
            informative: 5,
            rare_frequency: 0.02,
            rare_signal: 3.0,
            rare_noise: 1.0,
            background_shift: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.dimension == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if self.informative > self.dimension {
            return Err(Error::config("more informative coordinates than dimensions"));
        }
        if !prob(self.positive_fraction) || !prob(self.density) || !prob(self.rare_frequency) {
            return Err(Error::config("fractions and frequencies must lie in [0, 1]"));
        }
        if !self.rare_signal.is_finite() || !self.background_shift.is_finite() {
            return Err(Error::config("signal strengths must be finite"));
        }
        if !(self.rare_noise >= 0.0 && self.rare_noise.is_finite()) {
            return Err(Error::config("rare_noise must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn positives(&self) -> usize {
        (self.instances as f64 * self.positive_fraction).round() as usize
    }
}

pub fn generate(config: &SynthConfig) -> Result<Dataset<f64>> {
    config.validate()?;
    let mut rng = rng::seeded(config.seed);
    let pos = config.positives();
    let mut labels: Vec<Label> = (0..config.instances)
        .map(|i| if i < pos { Label::Positive } else { Label::Negative })
        .collect();
    labels.shuffle(&mut rng);

    let mut instances = Vec::with_capacity(config.instances);
    for label in labels {
        let y: f64 = label.sign();
        let mut entries = Vec::new();
        for i in 0..config.dimension {
            let (p, mean, scale) = if i < config.informative {
                (config.rare_frequency, y * config.rare_signal, config.rare_noise)
            } else {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                (config.density, y * s * config.background_shift, 1.0)
            };
            if rng.random_bool(p) {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let v = mean + scale * noise;
                if v != 0.0 {
                    entries.push((i, v));
                }
            }
        }
        instances.push(Instance::new(SparseVector::new(config.dimension, entries)?, label));
    }
    Dataset::new(format!("synth-{}", config.seed), config.dimension, instances)
}
