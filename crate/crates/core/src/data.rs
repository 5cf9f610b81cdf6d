//! Sparse instances, LIBSVM ingestion, normalization, label binarization and
//! seeded fold assignment.
//!
//! LIBSVM lines look like `label idx:val idx:val ...` with 1-based, strictly
//! ascending indices. `#` starts a comment, blank lines are skipped, and both
//! LF and CRLF endings are accepted. Internally coordinates are 0-based.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

/// Sparse feature vector with strictly increasing coordinates and no stored zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector<T> {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseVector<T> {
    /// Builds a vector from `(coordinate, value)` pairs.
    ///
    /// Zero values are dropped. Coordinates must be strictly increasing and
    /// below `dim`; values must be finite.
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (usize, T)>) -> Result<Self> {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, v) in entries {
            if i >= dim {
                return Err(Error::config(format!(
                    "coordinate {i} out of range for dimension {dim}"
                )));
            }
            if let Some(&last) = indices.last() {
                if i <= last {
                    return Err(Error::config(format!(
                        "coordinates must be strictly increasing ({i} after {last})"
                    )));
                }
            }
            if !v.is_finite() {
                return Err(Error::numeric(format!("non-finite value at coordinate {i}")));
            }
            if v != T::zero() {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Sparse copy of a dense slice. Panics on non-finite input.
    pub fn from_dense(dense: &[T]) -> Self {
        Self::new(dense.len(), dense.iter().copied().enumerate())
            .expect("dense input must be finite")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, i: usize) -> T {
        match self.indices.binary_search(&i) {
            Ok(k) => self.values[k],
            Err(_) => T::zero(),
        }
    }

    pub fn dot(&self, w: &[T]) -> T {
        self.iter().fold(T::zero(), |acc, (i, v)| acc + v * w[i])
    }

    pub fn norm(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// Adds `scale * self` into a dense accumulator.
    pub fn axpy_into(&self, scale: T, out: &mut [T]) {
        for (i, v) in self.iter() {
            out[i] = out[i] + scale * v;
        }
    }

    /// Same entries viewed in a larger dimension.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if self.indices.last().is_some_and(|&i| i >= dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: self.indices.last().unwrap() + 1,
            });
        }
        self.dim = dim;
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign<T: Real>(self) -> T {
        match self {
            Label::Positive => T::one(),
            Label::Negative => -T::one(),
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    /// Maps a raw real-valued label by sign: `> 0` is positive.
    pub fn from_raw(raw: f64) -> Self {
        if raw > 0.0 { Label::Positive } else { Label::Negative }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(format!("label must be -1 or +1, got {other}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance<T> {
    pub features: SparseVector<T>,
    pub label: Label,
}

impl<T: Real> Instance<T> {
    pub fn new(features: SparseVector<T>, label: Label) -> Self {
        Self { features, label }
    }
}

/// Binary-labelled instances sharing one feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub name: String,
    dimension: usize,
    instances: Vec<Instance<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn new(name: impl Into<String>, dimension: usize, instances: Vec<Instance<T>>) -> Result<Self> {
        for inst in &instances {
            Error::check_dim(dimension, inst.features.dim())?;
        }
        Ok(Self {
            name: name.into(),
            dimension,
            instances,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn instances(&self) -> &[Instance<T>] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.instances.iter().map(|i| i.label).collect()
    }

    /// `(positives, negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.instances.iter().filter(|i| i.label.is_positive()).count();
        (pos, self.len() - pos)
    }

    pub fn has_both_classes(&self) -> bool {
        let (p, n) = self.class_counts();
        p > 0 && n > 0
    }

    /// Instances at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            dimension: self.dimension,
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
        }
    }

    pub fn normalized(&self) -> Self {
        Self {
            name: self.name.clone(),
            dimension: self.dimension,
            instances: self.instances.iter().cloned().map(l2_normalize).collect(),
        }
    }

    /// Re-targets every instance to a (larger) feature dimension.
    pub fn with_dimension(self, dimension: usize) -> Result<Self> {
        let instances = self
            .instances
            .into_iter()
            .map(|i| Ok(Instance::new(i.features.with_dim(dimension)?, i.label)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: self.name,
            dimension,
            instances,
        })
    }

    pub fn write_libsvm<W: Write>(&self, mut out: W) -> Result<()> {
        let mut line = String::new();
        for inst in &self.instances {
            line.clear();
            line.push_str(if inst.label.is_positive() { "+1" } else { "-1" });
            for (i, v) in inst.features.iter() {
                let _ = write!(line, " {}:{}", i + 1, v);
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_libsvm_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_libsvm(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Parsed file whose labels are still the raw real values from the file.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset<T> {
    pub name: String,
    pub dimension: usize,
    pub rows: Vec<(f64, SparseVector<T>)>,
}

impl<T: Real> RawDataset<T> {
    /// Distinct raw labels in ascending order.
    pub fn distinct_labels(&self) -> Vec<f64> {
        let mut labels: Vec<f64> = self.rows.iter().map(|r| r.0).collect();
        labels.sort_by(f64::total_cmp);
        labels.dedup();
        labels
    }

    pub fn binarize_by_sign(self) -> Dataset<T> {
        let instances = self
            .rows
            .into_iter()
            .map(|(y, x)| Instance::new(x, Label::from_raw(y)))
            .collect();
        Dataset {
            name: self.name,
            dimension: self.dimension,
            instances,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParseOptions {
    /// Forces the feature dimension (must cover every index in the file).
    pub dimension: Option<usize>,
    pub name: String,
}

/// Parses LIBSVM text keeping raw labels; see [`parse_libsvm`] for the binary form.
pub fn parse_libsvm_raw<T: Real, R: BufRead>(reader: R, opts: &ParseOptions) -> Result<RawDataset<T>> {
    let mut rows: Vec<(f64, Vec<(usize, T)>)> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = match line.find('#') {
            Some(p) => &line[..p],
            None => &line,
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let label: f64 = label_tok
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(Error::parse(lineno, format!("non-finite label {label_tok:?}")));
        }

        let mut entries = Vec::new();
        let mut prev: Option<usize> = None;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, format!("malformed token {tok:?}")))?;
            let idx: i64 = idx
                .parse()
                .map_err(|_| Error::parse(lineno, format!("invalid index in {tok:?}")))?;
            if idx < 1 {
                return Err(Error::parse(lineno, format!("index {idx} < 1")));
            }
            let idx = idx as usize;
            if let Some(p) = prev {
                if idx == p {
                    return Err(Error::parse(lineno, format!("duplicate index {idx}")));
                }
                if idx < p {
                    return Err(Error::parse(lineno, format!("index {idx} after {p} is not ascending")));
                }
            }
            prev = Some(idx);
            let v: f64 = val
                .parse()
                .map_err(|_| Error::parse(lineno, format!("non-numeric value in {tok:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(lineno, format!("non-finite value in {tok:?}")));
            }
            max_index = max_index.max(idx);
            if v != 0.0 {
                entries.push((idx - 1, T::lit(v)));
            }
        }
        rows.push((label, entries));
    }

    let dimension = match opts.dimension {
        Some(d) if d < max_index => {
            return Err(Error::config(format!(
                "dimension override {d} is smaller than max index {max_index}"
            )));
        }
        Some(d) => d,
        None => max_index,
    };
    let rows = rows
        .into_iter()
        .map(|(y, e)| Ok((y, SparseVector::new(dimension, e)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RawDataset {
        name: opts.name.clone(),
        dimension,
        rows,
    })
}

/// Parses LIBSVM text, mapping labels by sign (`> 0` is positive).
pub fn parse_libsvm<T: Real, R: BufRead>(reader: R, opts: &ParseOptions) -> Result<Dataset<T>> {
    Ok(parse_libsvm_raw(reader, opts)?.binarize_by_sign())
}

pub fn parse_libsvm_str<T: Real>(text: &str, opts: &ParseOptions) -> Result<Dataset<T>> {
    parse_libsvm(text.as_bytes(), opts)
}

/// Reads a LIBSVM file; the dataset is named after the file stem unless `opts.name` is set.
pub fn read_libsvm_file<T: Real>(path: &Path, dimension: Option<usize>) -> Result<Dataset<T>> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = File::open(path)?;
    parse_libsvm(BufReader::new(file), &ParseOptions { dimension, name })
}

/// Scales the features to unit Euclidean norm. Zero vectors pass through unchanged.
pub fn l2_normalize<T: Real>(instance: Instance<T>) -> Instance<T> {
    let n = instance.features.norm();
    if n == T::zero() {
        return instance;
    }
    let Instance { features, label } = instance;
    let SparseVector { dim, indices, values } = features;
    let values = values.into_iter().map(|v| v / n).collect();
    Instance::new(SparseVector { dim, indices, values }, label)
}

/// Labels in `positive_set` become +1, every other label -1.
pub fn binarize_labels<T: Real>(raw: RawDataset<T>, positive_set: &[f64]) -> Result<Dataset<T>> {
    let observed = raw.distinct_labels();
    if positive_set.is_empty() {
        return Err(Error::config("positive label set is empty"));
    }
    if let Some(l) = positive_set.iter().find(|l| !observed.contains(l)) {
        return Err(Error::config(format!("positive label {l} never occurs")));
    }
    if observed.iter().all(|l| positive_set.contains(l)) {
        return Err(Error::config("positive label set covers every observed label"));
    }
    let instances = raw
        .rows
        .into_iter()
        .map(|(y, x)| {
            let label = if positive_set.contains(&y) {
                Label::Positive
            } else {
                Label::Negative
            };
            Instance::new(x, label)
        })
        .collect();
    Ok(Dataset {
        name: raw.name,
        dimension: raw.dimension,
        instances,
    })
}

/// Seeded random halving of the distinct labels: `k / 2` of them become the
/// positive meta-class, the rest (including any odd remainder) negative.
pub fn random_label_halving(labels: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut distinct = labels.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::config("need at least two distinct labels to binarize"));
    }
    distinct.shuffle(&mut rng::seeded(seed));
    let mut positive = distinct[..distinct.len() / 2].to_vec();
    positive.sort_by(f64::total_cmp);
    Ok(positive)
}

/// Per-repeat fold index of every instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub repeats: usize,
    pub folds: usize,
    pub seed: u64,
    pub assignments: Vec<Vec<usize>>,
}

impl PartitionPlan {
    /// Repeat `r` shuffles `0..n` with seed `seed + r` and cuts the permutation
    /// into `folds` contiguous blocks whose sizes differ by at most one.
    pub fn new(n: usize, folds: usize, repeats: usize, seed: u64) -> Result<Self> {
        if folds < 2 {
            return Err(Error::config(format!("need at least 2 folds, got {folds}")));
        }
        if n < folds {
            return Err(Error::config(format!("{n} instances cannot fill {folds} folds")));
        }
        let assignments = (0..repeats)
            .map(|r| {
                let order = rng::permutation(n, seed.wrapping_add(r as u64));
                let mut assign = vec![0; n];
                for (pos, &inst) in order.iter().enumerate() {
                    assign[inst] = block_of(pos, n, folds);
                }
                assign
            })
            .collect();
        Ok(Self {
            repeats,
            folds,
            seed,
            assignments,
        })
    }

    /// Like [`PartitionPlan::new`] but deals each class separately, so every fold
    /// receives a near-equal share of both labels.
    pub fn stratified(labels: &[Label], folds: usize, repeats: usize, seed: u64) -> Result<Self> {
        let n = labels.len();
        if folds < 2 {
            return Err(Error::config(format!("need at least 2 folds, got {folds}")));
        }
        if n < folds {
            return Err(Error::config(format!("{n} instances cannot fill {folds} folds")));
        }
        let assignments = (0..repeats)
            .map(|r| {
                let order = rng::permutation(n, seed.wrapping_add(r as u64));
                let mut assign = vec![0; n];
                let mut next = 0;
                for class in [Label::Positive, Label::Negative] {
                    for &inst in order.iter().filter(|&&i| labels[i] == class) {
                        assign[inst] = next % folds;
                        next += 1;
                    }
                }
                assign
            })
            .collect();
        Ok(Self {
            repeats,
            folds,
            seed,
            assignments,
        })
    }

    pub fn test_indices(&self, repeat: usize, fold: usize) -> Vec<usize> {
        self.assignments[repeat]
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, repeat: usize, fold: usize) -> Vec<usize> {
        self.assignments[repeat]
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self, repeat: usize) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.assignments[repeat] {
            sizes[f] += 1;
        }
        sizes
    }
}

fn block_of(pos: usize, n: usize, folds: usize) -> usize {
    let base = n / folds;
    let big = n % folds;
    let cut = big * (base + 1);
    if pos < cut {
        pos / (base + 1)
    } else {
        big + (pos - cut) / base
    }
}

pub fn make_partitions<T: Real>(dataset: &Dataset<T>, folds: usize, repeats: usize, seed: u64) -> Result<PartitionPlan> {
    PartitionPlan::new(dataset.len(), folds, repeats, seed)
}

/// Set of labels present in a dataset, useful for sanity checks.
pub fn label_set<T: Real>(dataset: &Dataset<T>) -> BTreeSet<Label> {
    dataset.instances().iter().map(|i| i.label).collect()
}
