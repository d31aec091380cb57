//! Dense numeric containers shared by every stage of the pipeline.
//!
//! All types validate their invariants at construction and are immutable
//! afterwards, so they are safe to share across threads by reference.

use crate::error::{Error, Result};

/// Tolerance for stochasticity checks (row sums, column sums, grand sums).
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Compensated (Kahan) summation in the order given.
pub(crate) fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Index of the row maximum, ties broken toward the lowest index.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// An `n x m` matrix of predicted probabilities, one row per example.
///
/// Entry `(k, j)` is the predicted probability that example `k` carries
/// label `j`. Rows are not required to sum to 1. In the default (strict)
/// mode every entry must lie in `[0, 1]`; the unnormalized constructor
/// only requires finiteness, which admits probabilities that a per-class
/// linear perturbation has pushed outside `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    /// Build a probability matrix, rejecting entries outside `[0, 1]`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::build(rows, cols, data, true)
    }

    /// Build a probability matrix requiring only finite entries.
    pub fn new_unnormalized(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::build(rows, cols, data, false)
    }

    fn build(rows: usize, cols: usize, data: Vec<f64>, strict: bool) -> Result<Self> {
        if rows == 0 || cols < 2 || data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                left: (rows, cols),
                right: (data.len() / cols.max(1), cols),
            });
        }
        for (idx, &v) in data.iter().enumerate() {
            let (row, col) = (idx / cols, idx % cols);
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry { row, col });
            }
            if strict && !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRangeEntry { row, col, value: v });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.cols..(k + 1) * self.cols]
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Length-`n` vector of class labels in `[0, classes)`.
///
/// Construction fails if any label is out of range or any class has no
/// examples. Datasets with absent classes can be repaired with
/// [`LabelVector::compact`], which drops the empty classes and remaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::NotStochastic {
                detail: format!("need at least 2 classes, got {classes}"),
            });
        }
        let mut seen = vec![false; classes];
        for (index, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::LabelOutOfRange {
                    index,
                    label,
                    classes,
                });
            }
            seen[label] = true;
        }
        if let Some(class) = seen.iter().position(|&s| !s) {
            return Err(Error::EmptyClass { class });
        }
        Ok(Self { labels, classes })
    }

    /// Drop absent classes and remap the remaining ones to `0..k`.
    ///
    /// Returns the compacted vector and, for each new class index, the
    /// original class id it came from.
    pub fn compact(labels: Vec<usize>, classes: usize) -> Result<(Self, Vec<usize>)> {
        let mut seen = vec![false; classes];
        for (index, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::LabelOutOfRange {
                    index,
                    label,
                    classes,
                });
            }
            seen[label] = true;
        }
        let kept: Vec<usize> = (0..classes).filter(|&c| seen[c]).collect();
        let mut remap = vec![usize::MAX; classes];
        for (new, &old) in kept.iter().enumerate() {
            remap[old] = new;
        }
        let remapped = labels.into_iter().map(|l| remap[l]).collect();
        Ok((Self::new(remapped, kept.len())?, kept))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, k: usize) -> usize {
        self.labels[k]
    }

    /// Number of examples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Example indices grouped by class, each group in ascending order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.classes];
        for (k, &l) in self.labels.iter().enumerate() {
            members[l].push(k);
        }
        members
    }
}

/// Check that a probability matrix and a label vector describe the same
/// dataset: one label per row and matching class counts.
///
/// Idempotent by construction; both inputs are returned unchanged.
pub fn validate_inputs<'a>(
    probs: &'a ProbMatrix,
    labels: &'a LabelVector,
) -> Result<(&'a ProbMatrix, &'a LabelVector)> {
    if probs.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            rows: probs.rows(),
            labels: labels.len(),
        });
    }
    if probs.cols() != labels.classes() {
        return Err(Error::ShapeMismatch {
            left: (probs.rows(), probs.cols()),
            right: (labels.len(), labels.classes()),
        });
    }
    Ok((probs, labels))
}

/// Which counting rule produced a [`CountMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountRole {
    /// Threshold-based counts; some examples may be counted nowhere.
    ConfidentJoint,
    /// Argmax confusion counts; every example is counted exactly once.
    Confusion,
}

/// An `m x m` matrix of non-negative counts over (given label, inferred
/// latent label) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    classes: usize,
    data: Vec<u64>,
    role: CountRole,
}

impl CountMatrix {
    pub fn new(classes: usize, data: Vec<u64>, role: CountRole) -> Result<Self> {
        if data.len() != classes * classes {
            return Err(Error::ShapeMismatch {
                left: (classes, classes),
                right: (data.len(), 1),
            });
        }
        Ok(Self {
            classes,
            data,
            role,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn role(&self) -> CountRole {
        self.role
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.classes + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|i| self.row(i).iter().sum())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.classes).map(|i| self.row(i).to_vec()).collect()
    }
}

/// An `m x m` real joint distribution over (noisy label, true label):
/// entries non-negative, grand sum 1.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMatrix {
    classes: usize,
    data: Vec<f64>,
}

impl JointMatrix {
    pub fn new(classes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != classes * classes {
            return Err(Error::ShapeMismatch {
                left: (classes, classes),
                right: (data.len(), 1),
            });
        }
        for (idx, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry {
                    row: idx / classes,
                    col: idx % classes,
                });
            }
            if v < 0.0 {
                return Err(Error::NotStochastic {
                    detail: format!("negative joint entry {v} at index {idx}"),
                });
            }
        }
        let total = kahan_sum(data.iter().copied());
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotStochastic {
                detail: format!("joint sums to {total}, expected 1"),
            });
        }
        Ok(Self { classes, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let classes = rows.len();
        let mut data = Vec::with_capacity(classes * classes);
        for row in &rows {
            if row.len() != classes {
                return Err(Error::ShapeMismatch {
                    left: (classes, classes),
                    right: (classes, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(classes, data)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.classes + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.classes).map(|i| self.row(i).to_vec()).collect()
    }

    /// Marginal of the noisy label (row sums).
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|i| kahan_sum(self.row(i).iter().copied()))
            .collect()
    }

    /// Marginal of the true label (column sums).
    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|j| kahan_sum((0..self.classes).map(|i| self.get(i, j))))
            .collect()
    }

    pub fn trace(&self) -> f64 {
        kahan_sum((0..self.classes).map(|i| self.get(i, i)))
    }

    /// Fraction of off-diagonal entries equal to zero.
    ///
    /// An entry counts as zero when its magnitude is `<= epsilon`;
    /// pass `0.0` to require exact zeros.
    pub fn sparsity(&self, epsilon: f64) -> f64 {
        let m = self.classes;
        let zeros = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.get(i, j).abs() <= epsilon)
            .count();
        zeros as f64 / (m * (m - 1)) as f64
    }
}

/// Which conditional a [`ConditionalMatrix`] represents. Columns are
/// indexed by the conditioning class in both orientations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Flipping rates p(noisy = i | true = j); column j conditions on true class j.
    NoiseTransition,
    /// Mixing rates p(true = i | noisy = j); column j conditions on noisy class j.
    Mixing,
}

/// An `m x m` column-stochastic conditional probability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMatrix {
    classes: usize,
    data: Vec<f64>,
    orientation: Orientation,
}

impl ConditionalMatrix {
    pub fn new(classes: usize, data: Vec<f64>, orientation: Orientation) -> Result<Self> {
        if data.len() != classes * classes {
            return Err(Error::ShapeMismatch {
                left: (classes, classes),
                right: (data.len(), 1),
            });
        }
        for (idx, &v) in data.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NotStochastic {
                    detail: format!("conditional entry {v} at index {idx}"),
                });
            }
        }
        for j in 0..classes {
            let sum = kahan_sum((0..classes).map(|i| data[i * classes + j]));
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic {
                    detail: format!("column {j} sums to {sum}, expected 1"),
                });
            }
        }
        Ok(Self {
            classes,
            data,
            orientation,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, orientation: Orientation) -> Result<Self> {
        let classes = rows.len();
        let mut data = Vec::with_capacity(classes * classes);
        for row in &rows {
            if row.len() != classes {
                return Err(Error::ShapeMismatch {
                    left: (classes, classes),
                    right: (classes, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(classes, data, orientation)
    }

    pub fn identity(classes: usize, orientation: Orientation) -> Self {
        let mut data = vec![0.0; classes * classes];
        for i in 0..classes {
            data[i * classes + i] = 1.0;
        }
        Self {
            classes,
            data,
            orientation,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.classes + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.classes).map(|i| self.get(i, j)).collect()
    }

    pub fn trace(&self) -> f64 {
        kahan_sum((0..self.classes).map(|i| self.get(i, i)))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.classes)
            .map(|i| (0..self.classes).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// True when every diagonal entry is the strict maximum of both its
    /// row and its column.
    pub fn diagonal_dominates(&self) -> bool {
        let m = self.classes;
        (0..m).all(|d| {
            (0..m).all(|k| {
                k == d || (self.get(d, k) < self.get(d, d) && self.get(k, d) < self.get(d, d))
            })
        })
    }
}

/// A length-`m` class probability vector: entries non-negative, sum 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorVector {
    values: Vec<f64>,
}

impl PriorVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NotStochastic {
                    detail: format!("prior entry {v}"),
                });
            }
        }
        let sum = kahan_sum(values.iter().copied());
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotStochastic {
                detail: format!("prior sums to {sum}, expected 1"),
            });
        }
        Ok(Self { values })
    }

    pub fn uniform(classes: usize) -> Self {
        Self {
            values: vec![1.0 / classes as f64; classes],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
