//! Per-class running moments.
//!
//! Two interchangeable representations of a class's mean and covariance:
//!
//! * [`DenseClassStats`] keeps the covariance matrix `Γ` itself and advances it
//!   with the incremental recurrence
//!   `Γ_t = Γ_{t-1} + c_{t-1}c_{t-1}ᵀ − c_t c_tᵀ + (x xᵀ − Γ_{t-1} − c_{t-1}c_{t-1}ᵀ) / T_t`.
//!   O(d²) per update, intended for low-dimensional data.
//! * [`SparseClassStats`] keeps `Z = Σ x xᵀ` over the support pairs only and
//!   applies `S = Z/T − c cᵀ` implicitly. O(nnz(x)²) per update.

use serde::Serialize;

use crate::data::{Label, SparseVector};
use crate::error::{Error, Result};
use crate::scalar::{Real, dot};

/// Read access to a class's count, mean and covariance action.
pub trait ClassMoments<T: Real> {
    fn dimension(&self) -> usize;
    fn count(&self) -> usize;
    fn mean(&self) -> &[T];

    /// Adds `S·w` into `out`, where `S` is the class covariance.
    fn covariance_apply_into(&self, w: &[T], out: &mut [T]) -> Result<()>;

    fn covariance_apply(&self, w: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dimension()];
        self.covariance_apply_into(w, &mut out)?;
        Ok(out)
    }

    /// Folds one instance of this class into the statistics.
    fn push(&mut self, x: &SparseVector<T>) -> Result<()>;
}

/// Count and mean, advanced by `c_t = c_{t-1} + (1/T_t)(x_t − c_{t-1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningMean<T> {
    count: usize,
    mean: Vec<T>,
}

impl<T: Real> RunningMean<T> {
    pub fn new(dimension: usize) -> Self {
        Self {
            count: 0,
            mean: vec![T::zero(); dimension],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn update_mean(&mut self, x: &SparseVector<T>) -> Result<()> {
        Error::check_dim(self.mean.len(), x.dim())?;
        self.count += 1;
        let inv = T::one() / T::from_usize(self.count).unwrap();
        let mut k = 0;
        let (idx, vals) = (x.indices(), x.values());
        for (i, c) in self.mean.iter_mut().enumerate() {
            let xi = if k < idx.len() && idx[k] == i {
                k += 1;
                vals[k - 1]
            } else {
                T::zero()
            };
            *c = *c + inv * (xi - *c);
        }
        Ok(())
    }
}

/// Count, mean and explicit covariance matrix (row-major, `d × d`).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseClassStats<T> {
    moments: RunningMean<T>,
    cov: Vec<T>,
    prev_mean: Vec<T>,
    dense_x: Vec<T>,
}

impl<T: Real> DenseClassStats<T> {
    pub fn new(dimension: usize) -> Self {
        Self {
            moments: RunningMean::new(dimension),
            cov: vec![T::zero(); dimension * dimension],
            prev_mean: vec![T::zero(); dimension],
            dense_x: vec![T::zero(); dimension],
        }
    }

    pub fn covariance(&self) -> &[T] {
        &self.cov
    }

    pub fn cov_at(&self, i: usize, j: usize) -> T {
        self.cov[i * self.dimension() + j]
    }

    /// Advances the mean, then applies the covariance recurrence with
    /// `c_{t-1}` the pre-update and `c_t` the post-update mean.
    pub fn update_dense_covariance(&mut self, x: &SparseVector<T>) -> Result<()> {
        let d = self.dimension();
        Error::check_dim(d, x.dim())?;
        self.prev_mean.copy_from_slice(self.moments.mean());
        self.moments.update_mean(x)?;

        self.dense_x.iter_mut().for_each(|v| *v = T::zero());
        for (i, v) in x.iter() {
            self.dense_x[i] = v;
        }
        let inv = T::one() / T::from_usize(self.moments.count).unwrap();
        let (cp, c, xd) = (&self.prev_mean, &self.moments.mean, &self.dense_x);
        for i in 0..d {
            for j in i..d {
                let old = self.cov[i * d + j];
                let prev_outer = cp[i] * cp[j];
                let v = old + prev_outer - c[i] * c[j] + (xd[i] * xd[j] - old - prev_outer) * inv;
                self.cov[i * d + j] = v;
                self.cov[j * d + i] = v;
            }
        }
        Ok(())
    }

    pub fn max_asymmetry(&self) -> T {
        let d = self.dimension();
        let mut worst = T::zero();
        for i in 0..d {
            for j in 0..i {
                worst = worst.max((self.cov[i * d + j] - self.cov[j * d + i]).abs());
            }
        }
        worst
    }

    pub fn dump(&self) -> StatsDump {
        let d = self.dimension();
        StatsDump {
            count: self.count(),
            mean: self.mean().iter().map(|v| v.as_f64()).collect(),
            covariance: Some(
                (0..d)
                    .map(|i| (0..d).map(|j| self.cov_at(i, j).as_f64()).collect())
                    .collect(),
            ),
            zsum: None,
        }
    }
}

impl<T: Real> ClassMoments<T> for DenseClassStats<T> {
    fn dimension(&self) -> usize {
        self.moments.mean.len()
    }

    fn count(&self) -> usize {
        self.moments.count
    }

    fn mean(&self) -> &[T] {
        &self.moments.mean
    }

    fn covariance_apply_into(&self, w: &[T], out: &mut [T]) -> Result<()> {
        if self.count() == 0 {
            return Err(Error::UndefinedStatistics("covariance of an empty class"));
        }
        let d = self.dimension();
        Error::check_dim(d, w.len())?;
        for (i, o) in out.iter_mut().enumerate() {
            *o = *o + dot(&self.cov[i * d..(i + 1) * d], w);
        }
        Ok(())
    }

    fn push(&mut self, x: &SparseVector<T>) -> Result<()> {
        self.update_dense_covariance(x)
    }
}

/// Count, mean and `Z = Σ x xᵀ`.
///
/// `Z` is kept as symmetric sparse rows: row `i` holds every `(j, Z_ij)` with
/// a nonzero co-occurrence, sorted by `j`. Storing both triangles lets `Z·w`
/// touch only the rows of nonzero weights, and the fixed iteration order
/// keeps every floating point sum deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseClassStats<T> {
    moments: RunningMean<T>,
    rows: Vec<Vec<(usize, T)>>,
    entries: usize,
}

impl<T: Real> SparseClassStats<T> {
    pub fn new(dimension: usize) -> Self {
        Self {
            moments: RunningMean::new(dimension),
            rows: vec![Vec::new(); dimension],
            entries: 0,
        }
    }

    pub fn update_sparse_stats(&mut self, x: &SparseVector<T>) -> Result<()> {
        self.moments.update_mean(x)?;
        let (idx, vals) = (x.indices(), x.values());
        for a in 0..idx.len() {
            let row = &mut self.rows[idx[a]];
            // merge the sorted index list of x into the sorted row
            let mut k = 0;
            for b in 0..idx.len() {
                let add = vals[a] * vals[b];
                while k < row.len() && row[k].0 < idx[b] {
                    k += 1;
                }
                if k < row.len() && row[k].0 == idx[b] {
                    row[k].1 = row[k].1 + add;
                } else {
                    row.insert(k, (idx[b], add));
                    if b >= a {
                        self.entries += 1;
                    }
                }
                k += 1;
            }
        }
        Ok(())
    }

    /// Number of stored `(i ≤ j)` pairs.
    pub fn zsum_len(&self) -> usize {
        self.entries
    }

    pub fn zsum_get(&self, i: usize, j: usize) -> T {
        match self.rows[i].binary_search_by_key(&j, |e| e.0) {
            Ok(k) => self.rows[i][k].1,
            Err(_) => T::zero(),
        }
    }

    pub fn zsum_entries(&self) -> impl Iterator<Item = ((usize, usize), T)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |e| e.0 >= i).map(move |&(j, v)| ((i, j), v)))
    }

    /// Entry `(i, j)` of `S = Z/T − c cᵀ`.
    pub fn implied_covariance(&self, i: usize, j: usize) -> Result<T> {
        let t = self.count();
        if t == 0 {
            return Err(Error::UndefinedStatistics("covariance of an empty class"));
        }
        let c = self.mean();
        Ok(self.zsum_get(i, j) / T::from_usize(t).unwrap() - c[i] * c[j])
    }

    pub fn dump(&self) -> StatsDump {
        StatsDump {
            count: self.count(),
            mean: self.mean().iter().map(|v| v.as_f64()).collect(),
            covariance: None,
            zsum: Some(
                self.zsum_entries()
                    .map(|((i, j), v)| (i, j, v.as_f64()))
                    .collect(),
            ),
        }
    }
}

impl<T: Real> ClassMoments<T> for SparseClassStats<T> {
    fn dimension(&self) -> usize {
        self.moments.mean.len()
    }

    fn count(&self) -> usize {
        self.moments.count
    }

    fn mean(&self) -> &[T] {
        &self.moments.mean
    }

    /// `out += Z·w / T − c (c·w)`.
    fn covariance_apply_into(&self, w: &[T], out: &mut [T]) -> Result<()> {
        let t = self.count();
        if t == 0 {
            return Err(Error::UndefinedStatistics("covariance of an empty class"));
        }
        Error::check_dim(self.dimension(), w.len())?;
        let inv = T::one() / T::from_usize(t).unwrap();
        let c = self.mean();
        let cw = dot(c, w);
        let nonzero = w.iter().filter(|&&v| v != T::zero()).count();
        let mut zw = vec![T::zero(); w.len()];
        if 2 * nonzero > w.len() {
            // mostly dense weights: gather each row's inner product
            for (i, row) in self.rows.iter().enumerate() {
                zw[i] = row.iter().fold(T::zero(), |acc, &(j, z)| acc + z * w[j]);
            }
        } else {
            // sparse weights: Z·w = Σ_j w_j Z[j, :] over nonzero w_j only
            for (j, row) in self.rows.iter().enumerate() {
                let wj = w[j];
                if wj == T::zero() {
                    continue;
                }
                for &(i, z) in row {
                    zw[i] = zw[i] + z * wj;
                }
            }
        }
        for i in 0..w.len() {
            out[i] = out[i] + zw[i] * inv - c[i] * cw;
        }
        Ok(())
    }

    fn push(&mut self, x: &SparseVector<T>) -> Result<()> {
        self.update_sparse_stats(x)
    }
}

/// JSON-serializable snapshot of one class's statistics.
#[derive(Clone, Debug, Serialize)]
pub struct StatsDump {
    pub count: usize,
    pub mean: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zsum: Option<Vec<(usize, usize, f64)>>,
}

impl StatsDump {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Statistics for both classes, indexed by label.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPair<S> {
    pub pos: S,
    pub neg: S,
}

impl<S> ClassPair<S> {
    pub fn of(&self, label: Label) -> &S {
        match label {
            Label::Positive => &self.pos,
            Label::Negative => &self.neg,
        }
    }

    pub fn of_mut(&mut self, label: Label) -> &mut S {
        match label {
            Label::Positive => &mut self.pos,
            Label::Negative => &mut self.neg,
        }
    }
}

/// Direct evaluation of `c = Σx/t` and `S = Σ x xᵀ/t − c cᵀ`.
///
/// Returns the mean and the row-major `d × d` covariance. Intended for tests
/// and bound checks.
pub fn batch_stats_oracle<T: Real>(instances: &[SparseVector<T>]) -> Result<(Vec<T>, Vec<T>)> {
    let first = instances
        .first()
        .ok_or(Error::UndefinedStatistics("no instances"))?;
    let d = first.dim();
    let t = T::from_usize(instances.len()).unwrap();
    let mut sum = vec![T::zero(); d];
    let mut outer = vec![T::zero(); d * d];
    for x in instances {
        Error::check_dim(d, x.dim())?;
        for (i, vi) in x.iter() {
            sum[i] = sum[i] + vi;
            for (j, vj) in x.iter() {
                outer[i * d + j] = outer[i * d + j] + vi * vj;
            }
        }
    }
    let mean: Vec<T> = sum.iter().map(|&s| s / t).collect();
    let cov = (0..d * d)
        .map(|k| outer[k] / t - mean[k / d] * mean[k % d])
        .collect();
    Ok((mean, cov))
}
