//! Pairwise square-loss objective and its per-round online estimate.
//!
//! For an incoming `(x, y)` and the opposite class's history `{xᵢ}` the
//! per-round loss is
//!
//! ```text
//! L_t(w) = λ/2 ‖w‖² + 1/(2 T_opp) Σᵢ (1 − y (x − xᵢ)·w)²
//! ```
//!
//! which depends on the history only through its mean `c` and covariance `S`:
//! `L_t(w) = λ/2 ‖w‖² + ½ (1 − y (x − c)·w)² + ½ wᵀ S w`, with gradient
//! `λw − y(x − c) + (x − c)((x − c)·w) + S w`.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, SparseVector};
use crate::error::{Error, Result};
use crate::scalar::{Real, dot, norm};
use crate::stats::ClassMoments;

/// Default smoothing added to the adaptive preconditioner diagonal.
pub const DEFAULT_DELTA: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams<T> {
    /// L2 regularization; learners project onto the ball of radius `1/√λ`.
    pub lambda: T,
    /// Learning rate.
    pub eta: T,
    /// L1 weight (sparse learner only).
    pub theta: T,
    /// Preconditioner smoothing.
    pub delta: T,
}

impl<T: Real> HyperParams<T> {
    pub fn new(eta: T, lambda: T) -> Self {
        Self {
            lambda,
            eta,
            theta: T::zero(),
            delta: T::lit(DEFAULT_DELTA),
        }
    }

    pub fn with_theta(mut self, theta: T) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_delta(mut self, delta: T) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self, needs_positive_lambda: bool) -> Result<()> {
        let all = [self.lambda, self.eta, self.theta, self.delta];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("hyperparameters must be finite"));
        }
        if self.eta <= T::zero() {
            return Err(Error::config("eta must be > 0"));
        }
        if self.lambda < T::zero() || self.theta < T::zero() || self.delta < T::zero() {
            return Err(Error::config("lambda, theta and delta must be >= 0"));
        }
        if needs_positive_lambda && self.lambda <= T::zero() {
            return Err(Error::config("lambda must be > 0 for ball-projected learners"));
        }
        Ok(())
    }

    /// Radius `1/√λ` of the feasible ball.
    pub fn radius(&self) -> T {
        T::one() / self.lambda.sqrt()
    }
}

fn centered<T: Real>(x: &SparseVector<T>, c: &[T]) -> Vec<T> {
    let mut diff: Vec<T> = c.iter().map(|&v| -v).collect();
    x.axpy_into(T::one(), &mut diff);
    diff
}

fn half_sq_norm<T: Real>(w: &[T]) -> T {
    dot(w, w) / T::lit(2.0)
}

/// Per-round loss from the opposite class's statistics. Zero when the
/// opposite class is still empty.
pub fn per_round_loss<T: Real, S: ClassMoments<T> + ?Sized>(
    w: &[T],
    x: &SparseVector<T>,
    y: Label,
    opposite: &S,
    lambda: T,
) -> Result<T> {
    if opposite.count() == 0 {
        return Ok(T::zero());
    }
    Error::check_dim(opposite.dimension(), w.len())?;
    let diff = centered(x, opposite.mean());
    let margin = T::one() - y.sign::<T>() * dot(&diff, w);
    let sw = opposite.covariance_apply(w)?;
    let half = T::lit(0.5);
    Ok(lambda * half_sq_norm(w) + half * margin * margin + half * dot(w, &sw))
}

/// Per-round loss by direct summation over stored opposite-class instances.
pub fn per_round_loss_buffer<T: Real>(
    w: &[T],
    x: &SparseVector<T>,
    y: Label,
    buffer: &[SparseVector<T>],
    lambda: T,
) -> T {
    if buffer.is_empty() {
        return T::zero();
    }
    let ys = y.sign::<T>();
    let xw = x.dot(w);
    let sum = buffer
        .iter()
        .map(|xi| {
            let r = T::one() - ys * (xw - xi.dot(w));
            r * r
        })
        .fold(T::zero(), |a, b| a + b);
    lambda * half_sq_norm(w) + sum / (T::lit(2.0) * T::from_usize(buffer.len()).unwrap())
}

/// Gradient of the per-round loss at `w` in mean/covariance form.
///
/// The rank-one term is formed through the inner product `(x − c)·w`; the
/// outer product is never built.
pub fn per_round_gradient<T: Real, S: ClassMoments<T> + ?Sized>(
    w: &[T],
    x: &SparseVector<T>,
    y: Label,
    opposite: &S,
    lambda: T,
) -> Result<Vec<T>> {
    if opposite.count() == 0 {
        return Err(Error::UndefinedStatistics(
            "gradient needs at least one opposite-class instance",
        ));
    }
    Error::check_dim(opposite.dimension(), w.len())?;
    let diff = centered(x, opposite.mean());
    let proj = dot(&diff, w);
    let ys = y.sign::<T>();
    let mut g: Vec<T> = w
        .iter()
        .zip(&diff)
        .map(|(&wi, &di)| lambda * wi - ys * di + di * proj)
        .collect();
    opposite.covariance_apply_into(w, &mut g)?;
    Ok(g)
}

/// Gradient by differentiating each stored pair term directly.
pub fn gradient_oracle<T: Real>(
    w: &[T],
    x: &SparseVector<T>,
    y: Label,
    buffer: &[SparseVector<T>],
    lambda: T,
) -> Result<Vec<T>> {
    if buffer.is_empty() {
        return Err(Error::UndefinedStatistics("empty opposite-class buffer"));
    }
    let ys = y.sign::<T>();
    let n = T::from_usize(buffer.len()).unwrap();
    let xd = x.to_dense();
    let mut g: Vec<T> = w.iter().map(|&wi| lambda * wi).collect();
    for xi in buffer {
        let xid = xi.to_dense();
        let d: Vec<T> = xd.iter().zip(&xid).map(|(&a, &b)| a - b).collect();
        let r = T::one() - ys * dot(&d, w);
        for (gk, dk) in g.iter_mut().zip(&d) {
            *gk = *gk - ys * *dk * r / n;
        }
    }
    Ok(g)
}

/// Full pairwise objective `λ/2‖w‖² + Σᵢⱼ (1 − w·(xᵢ⁺ − xⱼ⁻))² / (2 n₊ n₋)` by direct enumeration.
pub fn full_objective<T: Real>(w: &[T], dataset: &Dataset<T>, lambda: T) -> Result<T> {
    if !dataset.has_both_classes() {
        return Err(Error::Evaluation("objective needs both classes".into()));
    }
    Error::check_dim(dataset.dimension(), w.len())?;
    let (pos, neg): (Vec<T>, Vec<T>) = {
        let mut p = Vec::new();
        let mut n = Vec::new();
        for inst in dataset.instances() {
            let s = inst.features.dot(w);
            if inst.label.is_positive() { p.push(s) } else { n.push(s) }
        }
        (p, n)
    };
    let mut sum = T::zero();
    for &sp in &pos {
        for &sn in &neg {
            let r = T::one() - (sp - sn);
            sum = sum + r * r;
        }
    }
    let pairs = T::from_usize(pos.len() * neg.len()).unwrap();
    Ok(lambda * half_sq_norm(w) + sum / (T::lit(2.0) * pairs))
}

/// The full objective in moment form:
/// `λ/2‖w‖² + ½(1 − w·Δc)² + ½ wᵀ(S⁺ + S⁻)w` with `Δc = c⁺ − c⁻`.
#[derive(Clone, Debug)]
pub struct FullObjective<T> {
    lambda: T,
    mean_gap: Vec<T>,
    /// Row-major `S⁺ + S⁻`.
    pooled: Vec<T>,
    /// `E‖x⁺ − x⁻‖²`, an upper bound on the curvature of the data term.
    pair_energy: T,
}

impl<T: Real> FullObjective<T> {
    pub fn new(dataset: &Dataset<T>, lambda: T) -> Result<Self> {
        if !dataset.has_both_classes() {
            return Err(Error::Evaluation("objective needs both classes".into()));
        }
        let split = |label: Label| -> Vec<SparseVector<T>> {
            dataset
                .instances()
                .iter()
                .filter(|i| i.label == label)
                .map(|i| i.features.clone())
                .collect()
        };
        let (cp, sp) = crate::stats::batch_stats_oracle(&split(Label::Positive))?;
        let (cn, sn) = crate::stats::batch_stats_oracle(&split(Label::Negative))?;
        let d = dataset.dimension();
        let mean_gap: Vec<T> = cp.iter().zip(&cn).map(|(&a, &b)| a - b).collect();
        let pooled: Vec<T> = sp.iter().zip(&sn).map(|(&a, &b)| a + b).collect();
        let trace = (0..d).fold(T::zero(), |acc, i| acc + pooled[i * d + i]);
        Ok(Self {
            lambda,
            pair_energy: dot(&mean_gap, &mean_gap) + trace,
            mean_gap,
            pooled,
        })
    }

    pub fn dimension(&self) -> usize {
        self.mean_gap.len()
    }

    pub fn value(&self, w: &[T]) -> T {
        let d = self.dimension();
        let r = T::one() - dot(&self.mean_gap, w);
        let quad = (0..d).fold(T::zero(), |acc, i| {
            acc + w[i] * dot(&self.pooled[i * d..(i + 1) * d], w)
        });
        let half = T::lit(0.5);
        self.lambda * half_sq_norm(w) + half * r * r + half * quad
    }

    pub fn gradient(&self, w: &[T]) -> Vec<T> {
        let d = self.dimension();
        let r = T::one() - dot(&self.mean_gap, w);
        (0..d)
            .map(|i| {
                self.lambda * w[i] - self.mean_gap[i] * r + dot(&self.pooled[i * d..(i + 1) * d], w)
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Minimizer<T> {
    pub weights: Vec<T>,
    pub gradient_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected gradient descent on the full objective.
///
/// Step `1/(λ + max(4, E‖x⁺ − x⁻‖²))`, which is `1/(λ + 4)` on normalized
/// data; stops once the gradient norm drops below `tol` or after `max_iter` steps.
pub fn minimize_full_objective<T: Real>(
    dataset: &Dataset<T>,
    lambda: T,
    tol: T,
    max_iter: usize,
) -> Result<Minimizer<T>> {
    if lambda <= T::zero() {
        return Err(Error::config("lambda must be > 0"));
    }
    let obj = FullObjective::new(dataset, lambda)?;
    let step = T::one() / (lambda + obj.pair_energy.max(T::lit(4.0)));
    let radius = T::one() / lambda.sqrt();
    let mut w = vec![T::zero(); obj.dimension()];
    let mut g = obj.gradient(&w);
    let mut gn = norm(&g);
    let mut it = 0;
    while gn >= tol && it < max_iter {
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi = *wi - step * *gi;
        }
        w = crate::adagrad::project_euclidean_ball(&w, radius);
        g = obj.gradient(&w);
        gn = norm(&g);
        it += 1;
    }
    Ok(Minimizer {
        weights: w,
        gradient_norm: gn,
        iterations: it,
        converged: gn < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Instance;
    use crate::stats::DenseClassStats;
    use rand::Rng;

    fn sv(v: &[f64]) -> SparseVector<f64> {
        SparseVector::from_dense(v)
    }

    fn random_vec(rng: &mut crate::rng::Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn loss_without_opposite_history_is_zero() {
        let stats = DenseClassStats::<f64>::new(2);
        let l = per_round_loss(&[1.0, 2.0], &sv(&[1.0, 0.0]), Label::Positive, &stats, 0.5).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(per_round_loss_buffer(&[1.0, 2.0], &sv(&[1.0, 0.0]), Label::Positive, &[], 0.5), 0.0);
    }

    #[test]
    fn loss_plug_in_single_pair() {
        let mut stats = DenseClassStats::new(2);
        stats.push(&sv(&[0.3, 0.1])).unwrap();
        let l = per_round_loss(&[0.0, 0.0], &sv(&[1.0, 0.0]), Label::Positive, &stats, 0.0).unwrap();
        assert_eq!(l, 0.5);
    }

    #[test]
    fn loss_matches_brute_force_buffer() {
        let mut rng = crate::rng::seeded(4);
        let buffer: Vec<_> = (0..7).map(|_| sv(&random_vec(&mut rng, 4))).collect();
        let mut stats = DenseClassStats::new(4);
        for b in &buffer {
            stats.push(b).unwrap();
        }
        let w = random_vec(&mut rng, 4);
        let x = sv(&random_vec(&mut rng, 4));
        for y in [Label::Positive, Label::Negative] {
            let a = per_round_loss(&w, &x, y, &stats, 0.3).unwrap();
            let b = per_round_loss_buffer(&w, &x, y, &buffer, 0.3);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_single_prior_negative() {
        let xn = sv(&[0.2, -0.5, 1.0]);
        let x = sv(&[1.0, 0.5, 0.0]);
        let mut stats = DenseClassStats::new(3);
        stats.push(&xn).unwrap();
        let g = per_round_gradient(&[0.0; 3], &x, Label::Positive, &stats, 0.0).unwrap();
        let want = [0.2 - 1.0, -0.5 - 0.5, 1.0];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let o = gradient_oracle(&[0.0; 3], &x, Label::Positive, &[xn], 0.0).unwrap();
        assert_eq!(g, o);
    }

    #[test]
    fn gradient_requires_history() {
        let stats = DenseClassStats::<f64>::new(2);
        assert!(matches!(
            per_round_gradient(&[0.0, 0.0], &sv(&[1.0, 1.0]), Label::Negative, &stats, 0.1),
            Err(Error::UndefinedStatistics(_))
        ));
        assert!(gradient_oracle(&[0.0], &sv(&[1.0]), Label::Negative, &[], 0.1).is_err());
    }

    #[test]
    fn gradient_matches_oracle_and_finite_differences() {
        let mut rng = crate::rng::seeded(21);
        for case in 0..30 {
            let d = 1 + case % 8;
            let n = 1 + case % 5;
            let buffer: Vec<_> = (0..n).map(|_| sv(&random_vec(&mut rng, d))).collect();
            let mut stats = DenseClassStats::new(d);
            for b in &buffer {
                stats.push(b).unwrap();
            }
            let w = random_vec(&mut rng, d);
            let x = sv(&random_vec(&mut rng, d));
            let y = if case % 2 == 0 { Label::Positive } else { Label::Negative };
            let lambda = 0.25;
            let g = per_round_gradient(&w, &x, y, &stats, lambda).unwrap();
            let o = gradient_oracle(&w, &x, y, &buffer, lambda).unwrap();
            for k in 0..d {
                assert!((g[k] - o[k]).abs() < 1e-10);
                let h = 1e-6;
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += h;
                wm[k] -= h;
                let fd = (per_round_loss_buffer(&wp, &x, y, &buffer, lambda)
                    - per_round_loss_buffer(&wm, &x, y, &buffer, lambda))
                    / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn lambda_term_dominates_for_large_lambda() {
        let w = [0.7, -0.2];
        let buffer = [sv(&[0.1, 0.0])];
        let x = sv(&[0.0, 0.1]);
        let g = gradient_oracle(&w, &x, Label::Positive, &buffer, 1e6).unwrap();
        for (gi, wi) in g.iter().zip(w) {
            assert!((gi / 1e6 - wi).abs() < 1e-6);
        }
    }

    fn tiny_dataset() -> Dataset<f64> {
        let inst = |v: &[f64], l| Instance::new(sv(v), l);
        Dataset::new(
            "tiny",
            2,
            vec![
                inst(&[0.6, 0.8], Label::Positive),
                inst(&[1.0, 0.0], Label::Positive),
                inst(&[0.0, -1.0], Label::Negative),
                inst(&[-0.6, 0.8], Label::Negative),
                inst(&[0.0, 1.0], Label::Negative),
            ],
        )
        .unwrap()
    }

    #[test]
    fn full_objective_at_zero_is_half() {
        let ds = tiny_dataset();
        assert_eq!(full_objective(&[0.0, 0.0], &ds, 3.0).unwrap(), 0.5);
    }

    #[test]
    fn full_objective_single_pair() {
        let ds = Dataset::new(
            "pair",
            2,
            vec![
                Instance::new(sv(&[1.0, 0.5]), Label::Positive),
                Instance::new(sv(&[0.2, 0.1]), Label::Negative),
            ],
        )
        .unwrap();
        let w = [0.3, -0.4];
        let lambda = 0.2;
        let r: f64 = 1.0 - (0.3 * 0.8 - 0.4 * 0.4);
        let want = lambda / 2.0 * 0.25 + 0.5 * r * r;
        assert!((full_objective(&w, &ds, lambda).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn moment_form_matches_enumeration() {
        let ds = tiny_dataset();
        let obj = FullObjective::new(&ds, 0.1).unwrap();
        for w in [[0.0, 0.0], [0.5, -1.0], [2.0, 0.3]] {
            let a = obj.value(&w);
            let b = full_objective(&w, &ds, 0.1).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn minimizer_certifies_gradient_norm() {
        let ds = tiny_dataset();
        let m = minimize_full_objective(&ds, 0.1, 1e-8, 100_000).unwrap();
        assert!(m.converged);
        assert!(m.gradient_norm < 1e-8);
        let f = full_objective(&m.weights, &ds, 0.1).unwrap();
        for delta in [[1e-3, 0.0], [0.0, 1e-3], [-1e-3, 1e-3]] {
            let w2 = [m.weights[0] + delta[0], m.weights[1] + delta[1]];
            assert!(full_objective(&w2, &ds, 0.1).unwrap() >= f);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let ds = Dataset::new("one", 1, vec![Instance::new(sv(&[1.0]), Label::Positive)]).unwrap();
        assert!(full_objective(&[0.0], &ds, 1.0).is_err());
        assert!(minimize_full_objective(&ds, 1.0, 1e-8, 10).is_err());
    }
}
