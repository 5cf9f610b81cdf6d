//! Exact AUC, model sparsity, convergence curves and the regret-bound check.

use std::cmp::Ordering;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::data::{Dataset, Instance, Label};
use crate::error::{Error, Result};
use crate::learners::{Algorithm, ModelState, train_single_pass};
use crate::objective::{HyperParams, minimize_full_objective, per_round_loss};
use crate::scalar::Real;
use crate::stats::{ClassPair, DenseClassStats};

/// Exact area under the ROC curve: strict wins count 1, exact ties ½.
///
/// Runs in `O(n log n)` by sorting and sweeping over groups of equal scores;
/// the pair counts are accumulated as integers so the result is exact up to
/// the final division.
pub fn auc_score<T: Real>(scores: &[T], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Evaluation("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|l| l.is_positive()).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Evaluation("AUC needs at least one instance of each class".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // twice the AUC numerator: 2·wins + ties
    let mut doubled: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let s = scores[order[start]];
        let mut end = start;
        let (mut p, mut n) = (0u128, 0u128);
        while end < order.len() && scores[order[end]] == s {
            if labels[order[end]].is_positive() {
                p += 1;
            } else {
                n += 1;
            }
            end += 1;
        }
        doubled += 2 * p * neg_below + p * n;
        neg_below += n;
        start = end;
    }
    Ok(doubled as f64 / (2 * n_pos * n_neg) as f64)
}

/// Scores every instance of `dataset` with `model` and returns the AUC.
pub fn model_auc<T: Real>(model: &ModelState<T>, dataset: &Dataset<T>) -> Result<f64> {
    let scores: Vec<T> = dataset.instances().iter().map(|i| model.score(&i.features)).collect();
    auc_score(&scores, &dataset.labels())
}

/// Fraction of exactly-zero coordinates.
pub fn model_sparsity<T: Real>(w: &[T]) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    w.iter().filter(|&&v| v == T::zero()).count() as f64 / w.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegretCheck {
    /// Cumulative loss along the trajectory minus the loss of `w*`.
    pub lhs: f64,
    /// Data-dependent bound.
    pub rhs: f64,
    pub holds: bool,
}

/// Reference point for the regret comparison, with its optimality certificate.
#[derive(Clone, Debug)]
pub struct Comparator<T> {
    pub weights: Vec<T>,
    pub gradient_norm: T,
}

impl<T: Real> Comparator<T> {
    /// Minimizes the full pairwise objective over the stream.
    pub fn minimize(stream: &[Instance<T>], lambda: T) -> Result<Self> {
        let dim = stream
            .first()
            .map(|i| i.features.dim())
            .ok_or_else(|| Error::Evaluation("empty stream".into()))?;
        let ds = Dataset::new("stream", dim, stream.to_vec())?;
        let m = minimize_full_objective(&ds, lambda, T::lit(1e-8), 100_000)?;
        Ok(Self {
            weights: m.weights,
            gradient_norm: m.gradient_norm,
        })
    }
}

/// Compares the regret of a trajectory against the adaptive bound
/// `2D Σᵢ √(Σₜ (λ w_{t,i})² + C r_{t,i}²)`, with `D = 2/√λ`,
/// `C = (1 + 2/√λ)²` and `r_{t,i} = max_{j<t} |x_{j,i} − x_{t,i}|`.
///
/// `trajectory[t]` must be the weights *used* in round `t` (before that
/// round's update). Every instance must have norm at most 1.
pub fn regret_bound_check<T: Real>(
    trajectory: &[Vec<T>],
    stream: &[Instance<T>],
    lambda: T,
    comparator: &[T],
) -> Result<RegretCheck> {
    if trajectory.is_empty() {
        return Ok(RegretCheck {
            lhs: 0.0,
            rhs: 0.0,
            holds: true,
        });
    }
    if lambda <= T::zero() {
        return Err(Error::config("lambda must be > 0"));
    }
    if trajectory.len() > stream.len() {
        return Err(Error::Evaluation("trajectory is longer than the stream".into()));
    }
    let d = comparator.len();
    let one = T::one() + T::lit(1e-9);
    for (t, inst) in stream[..trajectory.len()].iter().enumerate() {
        Error::check_dim(d, inst.features.dim())?;
        Error::check_dim(d, trajectory[t].len())?;
        if inst.features.norm() > one {
            return Err(Error::Evaluation(format!(
                "instance {t} has norm above 1; normalize the stream first"
            )));
        }
    }

    let mut pair = ClassPair {
        pos: DenseClassStats::new(d),
        neg: DenseClassStats::new(d),
    };
    let mut lhs = T::zero();
    let mut lo = vec![T::zero(); d];
    let mut hi = vec![T::zero(); d];
    let mut sq = vec![T::zero(); d];
    let diameter = T::lit(2.0) / lambda.sqrt();
    let c = (T::one() + diameter) * (T::one() + diameter);

    for (t, (w, inst)) in trajectory.iter().zip(stream).enumerate() {
        pair.of_mut(inst.label).update_dense_covariance(&inst.features)?;
        let opp = pair.of(inst.label.opposite());
        lhs = lhs + per_round_loss(w, &inst.features, inst.label, opp, lambda)?
            - per_round_loss(comparator, &inst.features, inst.label, opp, lambda)?;

        let x = inst.features.to_dense();
        for i in 0..d {
            let r = if t == 0 { T::zero() } else { (hi[i] - x[i]).max(x[i] - lo[i]) };
            let lw = lambda * w[i];
            sq[i] = sq[i] + lw * lw + c * r * r;
            if t == 0 {
                lo[i] = x[i];
                hi[i] = x[i];
            } else {
                lo[i] = lo[i].min(x[i]);
                hi[i] = hi[i].max(x[i]);
            }
        }
    }
    let rhs = T::lit(2.0) * diameter * sq.iter().map(|s| s.sqrt()).fold(T::zero(), |a, b| a + b);
    let (lhs, rhs) = (lhs.as_f64(), rhs.as_f64());
    Ok(RegretCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-8,
    })
}

/// Trains on `stream` in the given order and records the weights in use at
/// every round.
pub fn record_trajectory<T: Real>(
    stream: &[Instance<T>],
    algorithm: Algorithm,
    params: HyperParams<T>,
) -> Result<Vec<Vec<T>>> {
    let dim = stream.first().map_or(0, |i| i.features.dim());
    let mut model = ModelState::new(algorithm, params, dim)?;
    let mut out = Vec::with_capacity(stream.len());
    for inst in stream {
        out.push(model.current_weights());
        model.step(inst)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub rounds_seen: usize,
    pub test_auc: f64,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceCurves {
    pub per_seed: Vec<(u64, Vec<CurvePoint>)>,
    pub mean: Vec<CurvePoint>,
}

/// Held-out AUC at each checkpoint of a single pass, for every seed.
///
/// Checkpoints beyond the training set size are clipped to the final round.
/// With `record_timing` off, elapsed times are reported as zero so that
/// output files are reproducible.
pub fn convergence_curve<T: Real>(
    train: &Dataset<T>,
    test: &Dataset<T>,
    algorithm: Algorithm,
    params: HyperParams<T>,
    checkpoints: &[usize],
    seeds: &[u64],
    record_timing: bool,
) -> Result<ConvergenceCurves> {
    if checkpoints.is_empty() {
        return Err(Error::config("at least one checkpoint is required"));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("checkpoints must be strictly increasing"));
    }
    let n = train.len();
    let mut schedule: Vec<usize> = checkpoints.iter().map(|&c| c.min(n)).collect();
    if checkpoints.last().is_some_and(|&c| c > n) {
        log::warn!("checkpoints beyond {n} rounds clipped to the final round");
    }
    schedule.dedup();

    let labels = test.labels();
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut points = Vec::with_capacity(schedule.len());
        let mut failure = None;
        let mut train_time = Duration::ZERO;
        let mut since = Instant::now();
        train_single_pass(train, algorithm, params, seed, &schedule, |rounds, model| {
            train_time += since.elapsed();
            let scores: Vec<T> = test.instances().iter().map(|i| model.score(&i.features)).collect();
            match auc_score(&scores, &labels) {
                Ok(auc) => points.push(CurvePoint {
                    rounds_seen: rounds,
                    test_auc: auc,
                    elapsed: if record_timing { train_time } else { Duration::ZERO },
                }),
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
            since = Instant::now();
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        per_seed.push((seed, points));
    }

    let mean = (0..schedule.len())
        .map(|k| {
            let m = per_seed.len().max(1) as f64;
            let auc = per_seed.iter().map(|(_, p)| p[k].test_auc).sum::<f64>() / m;
            let elapsed = per_seed.iter().map(|(_, p)| p[k].elapsed).sum::<Duration>() / m as u32;
            CurvePoint {
                rounds_seen: schedule[k],
                test_auc: auc,
                elapsed,
            }
        })
        .collect();
    Ok(ConvergenceCurves { per_seed, mean })
}

impl ConvergenceCurves {
    /// CSV with header `rounds,seed,auc,elapsed_ms`; the mean curve uses the
    /// seed value `mean`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "rounds,seed,auc,elapsed_ms")?;
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        for (seed, points) in &self.per_seed {
            for p in points {
                writeln!(out, "{},{},{:.6},{:.6}", p.rounds_seen, seed, p.test_auc, ms(p.elapsed))?;
            }
        }
        for p in &self.mean {
            writeln!(out, "{},mean,{:.6},{:.6}", p.rounds_seen, p.test_auc, ms(p.elapsed))?;
        }
        Ok(())
    }
}
