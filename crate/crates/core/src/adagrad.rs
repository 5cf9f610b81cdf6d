//! Diagonal adaptive preconditioning and the ball projections used by the learners.

use crate::error::{Error, Result};
use crate::scalar::{Real, norm};

/// Default absolute tolerance on `‖w‖ − radius` for the Mahalanobis projection.
pub const DEFAULT_PROJECTION_TOL: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 200;

/// Per-coordinate sums of squared gradients.
///
/// `sᵢ = √qᵢ` is the norm of the i-th gradient history and the preconditioner
/// diagonal is `Hᵢᵢ = δ + sᵢ`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaGradState<T> {
    sumsq: Vec<T>,
    delta: T,
    rounds_absorbed: usize,
}

impl<T: Real> AdaGradState<T> {
    pub fn new(dimension: usize, delta: T) -> Self {
        Self {
            sumsq: vec![T::zero(); dimension],
            delta,
            rounds_absorbed: 0,
        }
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn sumsq(&self) -> &[T] {
        &self.sumsq
    }

    pub fn rounds_absorbed(&self) -> usize {
        self.rounds_absorbed
    }

    pub fn accumulate(&mut self, g: &[T]) -> Result<()> {
        Error::check_dim(self.sumsq.len(), g.len())?;
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite gradient component at {i}")));
        }
        for (q, &gi) in self.sumsq.iter_mut().zip(g) {
            *q = *q + gi * gi;
        }
        self.rounds_absorbed += 1;
        Ok(())
    }

    pub fn s(&self, i: usize) -> T {
        self.sumsq[i].sqrt()
    }

    pub fn h(&self, i: usize) -> T {
        self.delta + self.s(i)
    }

    pub fn h_diag(&self) -> Vec<T> {
        (0..self.sumsq.len()).map(|i| self.h(i)).collect()
    }

    /// `H⁻¹ g`, i.e. `gᵢ / (δ + sᵢ)` per coordinate.
    pub fn preconditioned_direction(&self, g: &[T]) -> Result<Vec<T>> {
        Error::check_dim(self.sumsq.len(), g.len())?;
        g.iter()
            .enumerate()
            .map(|(i, &gi)| {
                let h = self.h(i);
                if h > T::zero() {
                    Ok(gi / h)
                } else if gi == T::zero() {
                    Ok(T::zero())
                } else {
                    Err(Error::numeric(format!(
                        "zero preconditioner at coordinate {i} with nonzero gradient"
                    )))
                }
            })
            .collect()
    }
}

/// Euclidean projection onto `{w : ‖w‖₂ ≤ radius}`.
pub fn project_euclidean_ball<T: Real>(u: &[T], radius: T) -> Vec<T> {
    let n = norm(u);
    if n <= radius {
        u.to_vec()
    } else {
        let scale = radius / n;
        u.iter().map(|&v| v * scale).collect()
    }
}

/// Projection of `u` onto the Euclidean ball of `radius` under the distance
/// `Σ hᵢ (wᵢ − uᵢ)²`.
///
/// The KKT conditions give `wᵢ = hᵢuᵢ / (hᵢ + ν)` for a multiplier `ν ≥ 0`;
/// `ν` is found by bisection on `‖w(ν)‖ = radius` over
/// `[0, max(h)·‖u‖/radius]`. The returned point is always feasible.
pub fn project_mahalanobis_ball<T: Real>(u: &[T], h: &[T], radius: T, tol: T) -> Result<Vec<T>> {
    Error::check_dim(u.len(), h.len())?;
    if let Some(i) = h.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::numeric(format!("non-positive metric entry at {i}")));
    }
    let un = norm(u);
    if un <= radius {
        return Ok(u.to_vec());
    }
    let tol = tol.max(T::lit(4.0) * T::epsilon() * radius);
    let hmax = h.iter().copied().fold(T::zero(), T::max);
    let at = |nu: T| -> Vec<T> {
        u.iter().zip(h).map(|(&ui, &hi)| hi * ui / (hi + nu)).collect()
    };

    let mut lo = T::zero();
    let mut hi = hmax * un / radius;
    let mut w_hi = at(hi);
    if radius - norm(&w_hi) <= tol {
        return Ok(w_hi);
    }
    let two = T::lit(2.0);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let w = at(mid);
        let n = norm(&w);
        if n > radius {
            lo = mid;
        } else {
            hi = mid;
            w_hi = w;
            if radius - n <= tol {
                return Ok(w_hi);
            }
        }
    }
    Err(Error::numeric(format!(
        "Mahalanobis projection did not converge (‖w‖ = {}, radius = {radius})",
        norm(&w_hi)
    )))
}
