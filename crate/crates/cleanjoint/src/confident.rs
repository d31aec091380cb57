//! Per-class confidence thresholds, the confident joint, and the
//! argmax confusion baseline.
//!
//! The two-pass contract is deliberate: thresholds are computed from the
//! full dataset first, then the joint is counted against them. Runtime
//! and storage are O(m^2 + n*m).

use crate::error::Result;
use crate::matrix::{
    argmax_lowest, kahan_sum, validate_inputs, CountMatrix, CountRole, LabelVector, ProbMatrix,
};

/// Length-`m` vector of per-class confidence thresholds.
///
/// The computed variant is the mean self-confidence of each class
/// (compensated summation in example order, so results are stable to
/// 1e-12 across platforms). Caller-supplied thresholds are accepted
/// anywhere a `ThresholdVector` is, which leaves room for alternative
/// threshold rules without changing the counting code.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    values: Vec<f64>,
}

impl ThresholdVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mean self-confidence of each class: the average predicted probability
/// of class `j` over the examples labeled `j`.
///
/// A class whose self-confidences are all identical (every example of
/// the class carries the same probability, as happens when no label was
/// flipped into it) gets exactly that value: the mean of a constant
/// sequence must not drift by a rounding step, or boundary comparisons
/// against the threshold become unstable.
pub fn compute_thresholds(probs: &ProbMatrix, labels: &LabelVector) -> Result<ThresholdVector> {
    validate_inputs(probs, labels)?;
    let m = labels.classes();
    let counts = labels.class_counts();
    let values = (0..m)
        .map(|j| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let sum = kahan_sum(
                labels
                    .as_slice()
                    .iter()
                    .enumerate()
                    .filter(|&(_, &l)| l == j)
                    .map(|(k, _)| {
                        let p = probs.get(k, j);
                        lo = lo.min(p);
                        hi = hi.max(p);
                        p
                    }),
            );
            if lo == hi {
                lo
            } else {
                sum / counts[j] as f64
            }
        })
        .collect();
    Ok(ThresholdVector { values })
}

/// Latent-class bin chosen for each example, `None` when the example
/// exceeded no class threshold and was counted nowhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinAssignment {
    bins: Vec<Option<usize>>,
    collisions: Vec<usize>,
}

impl BinAssignment {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bin_of(&self, k: usize) -> Option<usize> {
        self.bins[k]
    }

    pub fn bins(&self) -> &[Option<usize>] {
        &self.bins
    }

    /// Examples whose probabilities cleared more than one class
    /// threshold, i.e. the label collisions resolved by argmax.
    pub fn collision_indices(&self) -> &[usize] {
        &self.collisions
    }

    /// Indices of examples assigned to an off-diagonal bin (inferred
    /// latent class differs from the given label), ascending.
    pub fn off_diagonal_indices(&self, labels: &LabelVector) -> Vec<usize> {
        self.bins
            .iter()
            .enumerate()
            .filter_map(|(k, bin)| match bin {
                Some(j) if *j != labels.get(k) => Some(k),
                _ => None,
            })
            .collect()
    }
}

/// Count the confident joint.
///
/// Example `k` with given label `i` is considered for every class `l`
/// whose probability clears that class's threshold (inclusive `>=`).
/// With exactly one candidate the example lands in bin `(i, candidate)`;
/// with several (a label collision) the argmax over the full row decides,
/// ties broken toward the lowest class index; with none the example is
/// not counted anywhere. Returns the counts together with the
/// per-example assignment so downstream ranking can recover the bins.
pub fn confident_joint(
    probs: &ProbMatrix,
    labels: &LabelVector,
    thresholds: &ThresholdVector,
) -> Result<(CountMatrix, BinAssignment)> {
    validate_inputs(probs, labels)?;
    let m = labels.classes();
    let mut counts = vec![0u64; m * m];
    let mut bins = Vec::with_capacity(labels.len());
    let mut collisions = Vec::new();
    for (k, &given) in labels.as_slice().iter().enumerate() {
        let row = probs.row(k);
        let mut candidate = None;
        let mut n_candidates = 0usize;
        for (l, &p) in row.iter().enumerate() {
            if p >= thresholds.get(l) {
                n_candidates += 1;
                candidate = Some(l);
            }
        }
        let bin = match n_candidates {
            0 => None,
            1 => candidate,
            _ => {
                collisions.push(k);
                Some(argmax_lowest(row))
            }
        };
        if let Some(j) = bin {
            counts[given * m + j] += 1;
        }
        bins.push(bin);
    }
    let counts = CountMatrix::new(m, counts, CountRole::ConfidentJoint)?;
    Ok((counts, BinAssignment { bins, collisions }))
}

/// Argmax confusion counts: every example lands in the bin of its
/// highest-probability class, ties broken toward the lowest index.
pub fn confusion_joint(probs: &ProbMatrix, labels: &LabelVector) -> Result<CountMatrix> {
    validate_inputs(probs, labels)?;
    let m = labels.classes();
    let mut counts = vec![0u64; m * m];
    for (k, &given) in labels.as_slice().iter().enumerate() {
        let pred = argmax_lowest(probs.row(k));
        counts[given * m + pred] += 1;
    }
    CountMatrix::new(m, counts, CountRole::Confusion)
}
