use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Algorithm, ModelState};
use crate::data::SparseVector;
use crate::error::{Error, Result};
use crate::objective::HyperParams;
use crate::scalar::Real;

/// Portable model file: weights stored as `[index, value]` pairs of the
/// nonzero coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub algorithm: Algorithm,
    pub params: HyperParams<f64>,
    pub round: usize,
    pub dimension: usize,
    pub weights: Vec<(usize, f64)>,
}

impl ModelSnapshot {
    pub fn from_model<T: Real>(model: &ModelState<T>) -> Self {
        let p = model.params();
        let weights = model
            .current_weights()
            .into_iter()
            .enumerate()
            .filter(|(_, w)| *w != T::zero())
            .map(|(i, w)| (i, w.as_f64()))
            .collect();
        Self {
            algorithm: model.algorithm(),
            params: HyperParams {
                lambda: p.lambda.as_f64(),
                eta: p.eta.as_f64(),
                theta: p.theta.as_f64(),
                delta: p.delta.as_f64(),
            },
            round: model.round(),
            dimension: model.dimension(),
            weights,
        }
    }

    /// Validates indices and returns the weights as a dense vector.
    pub fn dense_weights(&self) -> Result<Vec<f64>> {
        let mut w = vec![0.0; self.dimension];
        for &(i, v) in &self.weights {
            if i >= self.dimension {
                return Err(Error::Dimension {
                    expected: self.dimension,
                    found: i + 1,
                });
            }
            if !v.is_finite() {
                return Err(Error::numeric(format!("non-finite weight at {i}")));
            }
            w[i] = v;
        }
        Ok(w)
    }

    /// Linear score of `x`; coordinates beyond the model's dimension score 0.
    pub fn score(&self, x: &SparseVector<f64>) -> f64 {
        self.weights
            .iter()
            .filter(|(i, _)| *i < x.dim())
            .map(|&(i, v)| v * x.get(i))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let snap: Self = serde_json::from_reader(input)?;
        snap.dense_weights()?;
        Ok(snap)
    }
}
