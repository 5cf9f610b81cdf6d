//! Online update rules and the single-pass trainer.
//!
//! Every learner consumes one instance per round. Pairwise learners first fold
//! the instance into its own class's statistics, then (if the opposite class
//! has been seen at least once) take a gradient step at the pre-step weights.
//! Until both classes have appeared the per-round loss is zero and nothing but
//! the statistics changes.

mod prox;
mod snapshot;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adagrad::{self, AdaGradState};
use crate::data::{Dataset, Instance, Label};
use crate::error::{Error, Result};
use crate::objective::{HyperParams, per_round_gradient};
use crate::rng;
use crate::scalar::{Real, norm};
use crate::stats::{ClassMoments, ClassPair, DenseClassStats, SparseClassStats};

pub use prox::{lazy_shrink, sadaoam_prox_coordinate};
pub use snapshot::ModelSnapshot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Adaptive-gradient pairwise learner with Mahalanobis ball projection.
    Adaoam,
    /// Sparse variant: Z-form statistics, L1 soft thresholding, lazy updates.
    Sadaoam,
    /// Pairwise online gradient descent with a fixed step (OPAUC-style).
    OgdPairwise,
    /// Class-weighted univariate logistic loss.
    UniLog,
    /// Class-weighted univariate exponential loss.
    UniExp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Adaoam,
        Algorithm::Sadaoam,
        Algorithm::OgdPairwise,
        Algorithm::UniLog,
        Algorithm::UniExp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Adaoam => "adaoam",
            Algorithm::Sadaoam => "sadaoam",
            Algorithm::OgdPairwise => "ogd_pairwise",
            Algorithm::UniLog => "uni_log",
            Algorithm::UniExp => "uni_exp",
        }
    }

    /// Whether θ is a tuned parameter for this learner.
    pub fn uses_theta(self) -> bool {
        self == Algorithm::Sadaoam
    }

    fn requires_ball(self) -> bool {
        self != Algorithm::Sadaoam
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown algorithm {s:?} (expected adaoam, sadaoam, ogd_pairwise, uni_log or uni_exp)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Moments<T> {
    Dense(ClassPair<DenseClassStats<T>>),
    Sparse(ClassPair<SparseClassStats<T>>),
    Counts(ClassPair<usize>),
}

/// Weights plus everything a learner carries between rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T> {
    algorithm: Algorithm,
    params: HyperParams<T>,
    weights: Vec<T>,
    round: usize,
    /// Rounds in which a weight update was actually taken.
    steps: usize,
    moments: Moments<T>,
    adagrad: AdaGradState<T>,
    /// Sparse learner: the step through which each stored weight is current.
    last_touch: Vec<usize>,
    touched: Vec<bool>,
    touched_list: Vec<usize>,
    clip_to_ball: bool,
    projection_tol: T,
}

impl<T: Real> ModelState<T> {
    pub fn new(algorithm: Algorithm, params: HyperParams<T>, dimension: usize) -> Result<Self> {
        params.validate(algorithm.requires_ball())?;
        let moments = match algorithm {
            Algorithm::Adaoam | Algorithm::OgdPairwise => Moments::Dense(ClassPair {
                pos: DenseClassStats::new(dimension),
                neg: DenseClassStats::new(dimension),
            }),
            Algorithm::Sadaoam => Moments::Sparse(ClassPair {
                pos: SparseClassStats::new(dimension),
                neg: SparseClassStats::new(dimension),
            }),
            Algorithm::UniLog | Algorithm::UniExp => Moments::Counts(ClassPair { pos: 0, neg: 0 }),
        };
        let sparse = algorithm == Algorithm::Sadaoam;
        Ok(Self {
            algorithm,
            params,
            weights: vec![T::zero(); dimension],
            round: 0,
            steps: 0,
            moments,
            adagrad: AdaGradState::new(dimension, params.delta),
            last_touch: if sparse { vec![0; dimension] } else { Vec::new() },
            touched: if sparse { vec![false; dimension] } else { Vec::new() },
            touched_list: Vec::new(),
            clip_to_ball: false,
            projection_tol: T::lit(adagrad::DEFAULT_PROJECTION_TOL),
        })
    }

    /// Sparse learner only: clip to the `1/√λ` ball after every step (off by default).
    pub fn with_ball_clip(mut self, on: bool) -> Result<Self> {
        if on && self.params.lambda <= T::zero() {
            return Err(Error::config("ball clipping needs lambda > 0"));
        }
        self.clip_to_ball = on;
        Ok(self)
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn params(&self) -> &HyperParams<T> {
        &self.params
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn adagrad(&self) -> &AdaGradState<T> {
        &self.adagrad
    }

    /// Stored weights. For the sparse learner some coordinates may still owe
    /// deferred L1 shrinkage; call [`ModelState::sync`] or use
    /// [`ModelState::current_weights`] for the up-to-date vector.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Up-to-date value of coordinate `i`.
    pub fn weight(&self, i: usize) -> T {
        if self.algorithm != Algorithm::Sadaoam {
            return self.weights[i];
        }
        lazy_shrink(
            self.weights[i],
            self.adagrad.h(i),
            self.params.eta,
            self.params.theta,
            self.steps - self.last_touch[i],
        )
    }

    pub fn current_weights(&self) -> Vec<T> {
        (0..self.dimension()).map(|i| self.weight(i)).collect()
    }

    pub fn score(&self, x: &crate::data::SparseVector<T>) -> T {
        x.iter().fold(T::zero(), |acc, (i, v)| acc + v * self.weight(i))
    }

    /// Class counts `(positives, negatives)` seen so far.
    pub fn class_counts(&self) -> (usize, usize) {
        match &self.moments {
            Moments::Dense(p) => (p.pos.count(), p.neg.count()),
            Moments::Sparse(p) => (p.pos.count(), p.neg.count()),
            Moments::Counts(p) => (p.pos, p.neg),
        }
    }

    /// Coordinates observed in at least one instance (sparse learner only).
    pub fn touched_coordinates(&self) -> &[usize] {
        &self.touched_list
    }

    /// Applies any deferred shrinkage so that [`ModelState::weights`] is current.
    pub fn sync(&mut self) {
        if self.algorithm == Algorithm::Sadaoam {
            let coords = self.touched_list.clone();
            self.lazy_apply(&coords, self.steps);
        }
    }

    /// Consumes one instance with the configured update rule.
    pub fn step(&mut self, instance: &Instance<T>) -> Result<()> {
        match self.algorithm {
            Algorithm::Adaoam => self.adaoam_step(instance),
            Algorithm::Sadaoam => self.sadaoam_step(instance),
            Algorithm::OgdPairwise => self.ogd_pairwise_step(instance),
            Algorithm::UniLog | Algorithm::UniExp => self.univariate_step(instance),
        }
    }

    fn expect(&self, ok: bool, op: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("{op} called on a {} model", self.algorithm)))
        }
    }

    /// Pushes `x` into its class's dense statistics and, if the opposite
    /// class is non-empty, returns the gradient at the current weights.
    fn dense_gradient(&mut self, instance: &Instance<T>) -> Result<Option<Vec<T>>> {
        Error::check_dim(self.dimension(), instance.features.dim())?;
        let Moments::Dense(pair) = &mut self.moments else {
            unreachable!("dense learner without dense statistics")
        };
        pair.of_mut(instance.label).update_dense_covariance(&instance.features)?;
        self.round += 1;
        let opp = pair.of(instance.label.opposite());
        if opp.count() == 0 {
            return Ok(None);
        }
        per_round_gradient(&self.weights, &instance.features, instance.label, opp, self.params.lambda).map(Some)
    }

    pub fn adaoam_step(&mut self, instance: &Instance<T>) -> Result<()> {
        self.expect(self.algorithm == Algorithm::Adaoam, "adaoam_step")?;
        let Some(g) = self.dense_gradient(instance)? else {
            return Ok(());
        };
        self.adagrad.accumulate(&g)?;
        let dir = self.adagrad.preconditioned_direction(&g)?;
        let eta = self.params.eta;
        let u: Vec<T> = self.weights.iter().zip(&dir).map(|(&w, &d)| w - eta * d).collect();
        let h = self.adagrad.h_diag();
        self.weights = adagrad::project_mahalanobis_ball(&u, &h, self.params.radius(), self.projection_tol)?;
        self.steps += 1;
        Ok(())
    }

    pub fn ogd_pairwise_step(&mut self, instance: &Instance<T>) -> Result<()> {
        self.expect(self.algorithm == Algorithm::OgdPairwise, "ogd_pairwise_step")?;
        let Some(g) = self.dense_gradient(instance)? else {
            return Ok(());
        };
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite gradient component at {i}")));
        }
        let eta = self.params.eta;
        let u: Vec<T> = self.weights.iter().zip(&g).map(|(&w, &gi)| w - eta * gi).collect();
        self.weights = adagrad::project_euclidean_ball(&u, self.params.radius());
        self.steps += 1;
        Ok(())
    }

    /// Brings `coordinates` current through step `current_step` by applying
    /// their pending zero-gradient shrinkage in closed form.
    pub fn lazy_apply(&mut self, coordinates: &[usize], current_step: usize) {
        let (eta, theta) = (self.params.eta, self.params.theta);
        for &i in coordinates {
            let gap = current_step.saturating_sub(self.last_touch[i]);
            if gap > 0 {
                self.weights[i] = lazy_shrink(self.weights[i], self.adagrad.h(i), eta, theta, gap);
            }
            self.last_touch[i] = current_step;
        }
    }

    pub fn sadaoam_step(&mut self, instance: &Instance<T>) -> Result<()> {
        self.expect(self.algorithm == Algorithm::Sadaoam, "sadaoam_step")?;
        Error::check_dim(self.dimension(), instance.features.dim())?;
        let x = &instance.features;
        {
            let Moments::Sparse(pair) = &mut self.moments else {
                unreachable!("sparse learner without sparse statistics")
            };
            pair.of_mut(instance.label).update_sparse_stats(x)?;
        }
        for &i in x.indices() {
            if !self.touched[i] {
                self.touched[i] = true;
                self.touched_list.push(i);
            }
        }
        self.round += 1;
        let Moments::Sparse(pair) = &self.moments else { unreachable!() };
        if pair.of(instance.label.opposite()).count() == 0 {
            return Ok(());
        }

        // The gradient reads every weight, so settle pending shrinkage first.
        // Zero weights are absorbing and can stay stale.
        let prev = self.steps;
        let (eta, theta) = (self.params.eta, self.params.theta);
        for &i in &self.touched_list {
            let w = self.weights[i];
            if w != T::zero() && self.last_touch[i] < prev {
                self.weights[i] = lazy_shrink(w, self.adagrad.h(i), eta, theta, prev - self.last_touch[i]);
                self.last_touch[i] = prev;
            }
        }

        let Moments::Sparse(pair) = &self.moments else { unreachable!() };
        let opp = pair.of(instance.label.opposite());
        let g = per_round_gradient(&self.weights, x, instance.label, opp, self.params.lambda)?;
        self.adagrad.accumulate(&g)?;
        self.steps += 1;
        let step = self.steps;
        for &i in &self.touched_list {
            if g[i] != T::zero() {
                if self.last_touch[i] < prev {
                    // stale zero weight: shrinkage keeps it at zero
                    self.last_touch[i] = prev;
                }
                self.weights[i] = sadaoam_prox_coordinate(self.weights[i], g[i], self.adagrad.h(i), eta, theta);
                self.last_touch[i] = step;
            }
        }
        debug_assert!(
            (0..self.dimension()).all(|i| self.touched[i] || g[i] == T::zero()),
            "gradient must vanish on untouched coordinates"
        );

        if self.clip_to_ball {
            self.sync();
            self.weights = adagrad::project_euclidean_ball(&self.weights, self.params.radius());
        }
        Ok(())
    }

    /// Plain SGD on the class-weighted univariate loss.
    ///
    /// The weight is `ρ = (opposite count) / max(own count, 1)` with the own
    /// count including the current instance; the exponential-loss gradient is
    /// clipped to norm 10.
    pub fn univariate_step(&mut self, instance: &Instance<T>) -> Result<()> {
        self.expect(
            matches!(self.algorithm, Algorithm::UniLog | Algorithm::UniExp),
            "univariate_step",
        )?;
        Error::check_dim(self.dimension(), instance.features.dim())?;
        let Moments::Counts(counts) = &mut self.moments else { unreachable!() };
        *counts.of_mut(instance.label) += 1;
        let own = *counts.of(instance.label);
        let opp = *counts.of(instance.label.opposite());
        self.round += 1;

        let rho = T::from_usize(opp).unwrap() / T::from_usize(own.max(1)).unwrap();
        let x = &instance.features;
        let coef = univariate_gradient_coef(self.algorithm, &self.weights, x, instance.label, rho);
        if !coef.is_finite() {
            return Err(Error::numeric("non-finite univariate gradient"));
        }
        let eta = self.params.eta;
        let mut u = self.weights.clone();
        x.axpy_into(-eta * coef, &mut u);
        self.weights = adagrad::project_euclidean_ball(&u, self.params.radius());
        self.steps += 1;
        Ok(())
    }

    /// Serializable copy of the current weights and configuration.
    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot::from_model(self)
    }
}

/// Scalar `a` such that the univariate gradient equals `a·x`.
pub fn univariate_gradient_coef<T: Real>(
    algorithm: Algorithm,
    w: &[T],
    x: &crate::data::SparseVector<T>,
    label: Label,
    rho: T,
) -> T {
    let y = label.sign::<T>();
    let margin = y * x.dot(w);
    match algorithm {
        Algorithm::UniLog => {
            // d/dw log(1 + e^{-m}) = -y x σ(-m)
            -rho * y / (T::one() + margin.exp())
        }
        Algorithm::UniExp => {
            let mut a = -rho * y * (-margin).exp();
            let gnorm = a.abs() * x.norm();
            let cap = T::lit(10.0);
            if gnorm > cap {
                a = a * cap / gnorm;
            }
            a
        }
        _ => unreachable!("not a univariate learner"),
    }
}

/// Order in which the single pass visits a dataset of `n` instances.
pub fn visit_order(n: usize, seed: u64) -> Vec<usize> {
    rng::permutation(n, seed)
}

/// One pass over a seeded shuffle of `dataset`.
///
/// `hook(rounds_seen, &model)` runs after each round listed in `checkpoints`
/// (and before the first instance for a checkpoint of 0).
pub fn train_single_pass<T: Real, F>(
    dataset: &Dataset<T>,
    algorithm: Algorithm,
    params: HyperParams<T>,
    seed: u64,
    checkpoints: &[usize],
    mut hook: F,
) -> Result<ModelState<T>>
where
    F: FnMut(usize, &ModelState<T>),
{
    if dataset.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    if !dataset.has_both_classes() {
        log::warn!(
            "dataset {:?} has a single class; the model will never take a step",
            dataset.name
        );
    }
    let mut model = ModelState::new(algorithm, params, dataset.dimension())?;
    let mut pending = checkpoints.iter().copied().peekable();
    while pending.next_if_eq(&0).is_some() {
        hook(0, &model);
    }
    for idx in visit_order(dataset.len(), seed) {
        model.step(&dataset.instances()[idx])?;
        let r = model.round();
        let mut hit = false;
        while pending.next_if(|&c| c <= r).is_some() {
            hit = true;
        }
        if hit {
            model.sync();
            hook(r, &model);
        }
    }
    model.sync();
    Ok(model)
}

pub fn train<T: Real>(dataset: &Dataset<T>, algorithm: Algorithm, params: HyperParams<T>, seed: u64) -> Result<ModelState<T>> {
    train_single_pass(dataset, algorithm, params, seed, &[], |_, _| {})
}

/// Checks the ball invariant `‖w‖ ≤ 1/√λ + slack`.
pub fn within_ball<T: Real>(w: &[T], lambda: T, slack: T) -> bool {
    norm(w) <= T::one() / lambda.sqrt() + slack
}

#[cfg(test)]
mod tests;
