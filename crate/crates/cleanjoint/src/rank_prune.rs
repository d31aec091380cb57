//! The five rank-and-prune methods for flagging label-error candidates,
//! plus ordering and pruning.

use std::collections::BTreeSet;

use crate::confident::{compute_thresholds, confident_joint, ThresholdVector};
use crate::error::{Error, Result};
use crate::estimate::class_weights;
use crate::matrix::{argmax_lowest, validate_inputs, JointMatrix, LabelVector, ProbMatrix};

/// Which flagging method produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Off-diagonals of the argmax confusion counts.
    Confusion,
    /// Off-diagonal bins of the confident joint.
    Cj,
    /// Prune by class: per-class budgets, lowest self-confidence first.
    Pbc,
    /// Prune by noise rate: per-pair budgets, largest margin first.
    Pbnr,
    /// Intersection of prune-by-class and prune-by-noise-rate.
    Cnr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Confusion => "confusion",
            Method::Cj => "cj",
            Method::Pbc => "pbc",
            Method::Pbnr => "pbnr",
            Method::Cnr => "cnr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "confusion" => Some(Method::Confusion),
            "cj" => Some(Method::Cj),
            "pbc" => Some(Method::Pbc),
            "pbnr" => Some(Method::Pbnr),
            "cnr" => Some(Method::Cnr),
            _ => None,
        }
    }
}

/// Scoring rule used to order flagged examples, most suspicious first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankRule {
    /// Predicted probability of the given label, ascending.
    SelfConfidence,
    /// Self-confidence minus the largest other-class probability,
    /// ascending (most negative first).
    NormalizedMargin,
}

impl RankRule {
    pub fn name(self) -> &'static str {
        match self {
            RankRule::SelfConfidence => "selfconf",
            RankRule::NormalizedMargin => "margin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "selfconf" => Some(RankRule::SelfConfidence),
            "margin" => Some(RankRule::NormalizedMargin),
            _ => None,
        }
    }
}

/// Ranked label-error candidates. `flagged` and `scores` are parallel,
/// sorted by ascending score with ties broken toward the lower index.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub method: Method,
    pub flagged: Vec<usize>,
    pub scores: Vec<f64>,
    pub rank_rule: RankRule,
}

impl ErrorReport {
    pub fn flagged_set(&self) -> BTreeSet<usize> {
        self.flagged.iter().copied().collect()
    }
}

fn score_example(probs: &ProbMatrix, labels: &LabelVector, k: usize, rule: RankRule) -> f64 {
    let given = labels.get(k);
    let row = probs.row(k);
    match rule {
        RankRule::SelfConfidence => row[given],
        RankRule::NormalizedMargin => {
            let other_max = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != given)
                .map(|(_, &p)| p)
                .fold(f64::NEG_INFINITY, f64::max);
            row[given] - other_max
        }
    }
}

/// Order a set of flagged examples by the chosen rule.
pub fn rank_errors(
    probs: &ProbMatrix,
    labels: &LabelVector,
    flagged: &BTreeSet<usize>,
    rule: RankRule,
    method: Method,
) -> Result<ErrorReport> {
    validate_inputs(probs, labels)?;
    if let Some(&bad) = flagged.iter().find(|&&k| k >= labels.len()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: labels.len(),
        });
    }
    let mut entries: Vec<(usize, f64)> = flagged
        .iter()
        .map(|&k| (k, score_example(probs, labels, k, rule)))
        .collect();
    entries.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(ErrorReport {
        method,
        flagged: entries.iter().map(|&(k, _)| k).collect(),
        scores: entries.iter().map(|&(_, s)| s).collect(),
        rank_rule: rule,
    })
}

/// Flag every example whose given label differs from the argmax class.
pub fn errors_confusion(
    probs: &ProbMatrix,
    labels: &LabelVector,
    rule: RankRule,
) -> Result<ErrorReport> {
    validate_inputs(probs, labels)?;
    let flagged: BTreeSet<usize> = labels
        .as_slice()
        .iter()
        .enumerate()
        .filter(|&(k, &given)| argmax_lowest(probs.row(k)) != given)
        .map(|(k, _)| k)
        .collect();
    rank_errors(probs, labels, &flagged, rule, Method::Confusion)
}

/// Flag the examples counted in off-diagonal bins of the confident
/// joint, with thresholds computed from the inputs.
pub fn errors_cj(probs: &ProbMatrix, labels: &LabelVector, rule: RankRule) -> Result<ErrorReport> {
    let thresholds = compute_thresholds(probs, labels)?;
    errors_cj_with(probs, labels, &thresholds, rule)
}

/// Same as [`errors_cj`], with caller-supplied thresholds.
pub fn errors_cj_with(
    probs: &ProbMatrix,
    labels: &LabelVector,
    thresholds: &ThresholdVector,
    rule: RankRule,
) -> Result<ErrorReport> {
    let (_, bins) = confident_joint(probs, labels, thresholds)?;
    let flagged: BTreeSet<usize> = bins.off_diagonal_indices(labels).into_iter().collect();
    rank_errors(probs, labels, &flagged, rule, Method::Cj)
}

/// Round half up and clamp to a class-size budget.
fn budget(value: f64, cap: usize) -> usize {
    ((value + 0.5).floor().max(0.0) as usize).min(cap)
}

fn pbc_set(probs: &ProbMatrix, labels: &LabelVector, joint: &JointMatrix) -> BTreeSet<usize> {
    let n = labels.len() as f64;
    let members = labels.class_members();
    let mut flagged = BTreeSet::new();
    for (i, class_members) in members.iter().enumerate() {
        let off_diag_mass: f64 = (0..joint.classes())
            .filter(|&j| j != i)
            .map(|j| joint.get(i, j))
            .sum();
        let k_i = budget(n * off_diag_mass, class_members.len());
        if k_i == 0 {
            continue;
        }
        let mut by_confidence: Vec<usize> = class_members.clone();
        // Lowest self-confidence first; class_members is ascending, and
        // the stable sort keeps the lower index first on ties.
        by_confidence.sort_by(|&a, &b| probs.get(a, i).partial_cmp(&probs.get(b, i)).unwrap());
        flagged.extend(by_confidence.into_iter().take(k_i));
    }
    flagged
}

fn pbnr_set(probs: &ProbMatrix, labels: &LabelVector, joint: &JointMatrix) -> BTreeSet<usize> {
    let n = labels.len() as f64;
    let members = labels.class_members();
    let mut flagged = BTreeSet::new();
    for (i, class_members) in members.iter().enumerate() {
        for j in 0..joint.classes() {
            if j == i {
                continue;
            }
            let k_ij = budget(n * joint.get(i, j), class_members.len());
            if k_ij == 0 {
                continue;
            }
            let mut by_margin: Vec<usize> = class_members.clone();
            // Largest margin p(j) - p(i) first, lower index on ties.
            by_margin.sort_by(|&a, &b| {
                let ma = probs.get(a, j) - probs.get(a, i);
                let mb = probs.get(b, j) - probs.get(b, i);
                mb.partial_cmp(&ma).unwrap()
            });
            flagged.extend(by_margin.into_iter().take(k_ij));
        }
    }
    flagged
}

fn check_joint(labels: &LabelVector, joint: &JointMatrix) -> Result<()> {
    if joint.classes() != labels.classes() {
        return Err(Error::ShapeMismatch {
            left: (joint.classes(), joint.classes()),
            right: (labels.classes(), labels.classes()),
        });
    }
    Ok(())
}

/// Prune by class: for each class, flag the `round(n * off-diagonal row
/// mass)` examples with lowest self-confidence.
pub fn errors_pbc(
    probs: &ProbMatrix,
    labels: &LabelVector,
    joint: &JointMatrix,
    rule: RankRule,
) -> Result<ErrorReport> {
    validate_inputs(probs, labels)?;
    check_joint(labels, joint)?;
    let flagged = pbc_set(probs, labels, joint);
    let mut report = rank_errors(probs, labels, &flagged, rule, Method::Pbc)?;
    report.method = Method::Pbc;
    Ok(report)
}

/// Prune by noise rate: for each off-diagonal pair `(i, j)`, flag the
/// `round(n * Q[i][j])` examples of class `i` with the largest margin
/// `p(j) - p(i)`. Overlapping selections are united without refilling
/// the per-pair budgets.
pub fn errors_pbnr(
    probs: &ProbMatrix,
    labels: &LabelVector,
    joint: &JointMatrix,
    rule: RankRule,
) -> Result<ErrorReport> {
    validate_inputs(probs, labels)?;
    check_joint(labels, joint)?;
    let flagged = pbnr_set(probs, labels, joint);
    let mut report = rank_errors(probs, labels, &flagged, rule, Method::Pbnr)?;
    report.method = Method::Pbnr;
    Ok(report)
}

/// Flag only the examples selected by both prune-by-class and
/// prune-by-noise-rate.
pub fn errors_cnr(
    probs: &ProbMatrix,
    labels: &LabelVector,
    joint: &JointMatrix,
    rule: RankRule,
) -> Result<ErrorReport> {
    validate_inputs(probs, labels)?;
    check_joint(labels, joint)?;
    let pbc = pbc_set(probs, labels, joint);
    let pbnr = pbnr_set(probs, labels, joint);
    let flagged: BTreeSet<usize> = pbc.intersection(&pbnr).copied().collect();
    rank_errors(probs, labels, &flagged, rule, Method::Cnr)
}

/// Kept example indices and the class weights to train with.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    pub kept: Vec<usize>,
    pub class_weights: Vec<f64>,
}

/// Remove the flagged examples and compute loss-reweighting factors.
pub fn prune(
    labels: &LabelVector,
    report: &ErrorReport,
    joint: &JointMatrix,
) -> Result<PruneResult> {
    let flagged = report.flagged_set();
    let kept = (0..labels.len()).filter(|k| !flagged.contains(k)).collect();
    Ok(PruneResult {
        kept,
        class_weights: class_weights(joint)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> (ProbMatrix, LabelVector) {
        let p = ProbMatrix::new(4, 2, vec![0.9, 0.1, 0.4, 0.6, 0.2, 0.8, 0.3, 0.7]).unwrap();
        let y = LabelVector::new(vec![0, 0, 1, 1], 2).unwrap();
        (p, y)
    }

    #[test]
    fn confusion_flags_nothing_on_one_hot_correct() {
        let p = ProbMatrix::new(4, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let y = LabelVector::new(vec![0, 0, 1, 1], 2).unwrap();
        let r = errors_confusion(&p, &y, RankRule::NormalizedMargin).unwrap();
        assert!(r.flagged.is_empty());
    }

    #[test]
    fn confusion_flags_argmax_disagreements() {
        let (p, y) = demo();
        let r = errors_confusion(&p, &y, RankRule::NormalizedMargin).unwrap();
        assert_eq!(r.flagged, vec![1]);
        assert!((r.scores[0] - (0.4 - 0.6)).abs() < 1e-12);
    }

    #[test]
    fn confusion_on_uniform_row_follows_tie_break() {
        let p = ProbMatrix::new(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let y = LabelVector::new(vec![0, 1], 2).unwrap();
        let r = errors_confusion(&p, &y, RankRule::SelfConfidence).unwrap();
        // Ties argmax to class 0: example 0 agrees, example 1 does not.
        assert_eq!(r.flagged, vec![1]);
    }

    #[test]
    fn cj_flags_nothing_when_all_bins_are_diagonal() {
        let (p, y) = demo();
        let r = errors_cj(&p, &y, RankRule::NormalizedMargin).unwrap();
        assert!(r.flagged.is_empty());
    }

    #[test]
    fn pbc_diagonal_joint_flags_nothing() {
        let (p, y) = demo();
        let q = JointMatrix::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let r = errors_pbc(&p, &y, &q, RankRule::SelfConfidence).unwrap();
        assert!(r.flagged.is_empty());
    }

    fn eight_example_instance() -> (ProbMatrix, LabelVector) {
        // Class 0 self-confidences: 0.9, 0.8, 0.7, 0.2 (example 3 lowest,
        // and also the example with the largest margin toward class 1).
        let p = ProbMatrix::new(
            8,
            2,
            vec![
                0.9, 0.1, //
                0.8, 0.2, //
                0.7, 0.3, //
                0.2, 0.8, //
                0.1, 0.9, //
                0.2, 0.8, //
                0.3, 0.7, //
                0.25, 0.75,
            ],
        )
        .unwrap();
        let y = LabelVector::new(vec![0, 0, 0, 0, 1, 1, 1, 1], 2).unwrap();
        (p, y)
    }

    #[test]
    fn pbc_worked_example_flags_lowest_self_confidence() {
        let (p, y) = eight_example_instance();
        let q = JointMatrix::from_rows(vec![vec![0.375, 0.125], vec![0.0, 0.5]]).unwrap();
        // k_0 = round(8 * 0.125) = 1, k_1 = 0.
        let r = errors_pbc(&p, &y, &q, RankRule::SelfConfidence).unwrap();
        assert_eq!(r.flagged, vec![3]);
    }

    #[test]
    fn pbc_breaks_score_ties_toward_lower_index() {
        let p = ProbMatrix::new(
            4,
            2,
            vec![0.2, 0.8, 0.2, 0.8, 0.9, 0.1, 0.1, 0.9],
        )
        .unwrap();
        let y = LabelVector::new(vec![0, 0, 0, 1], 2).unwrap();
        let q = JointMatrix::from_rows(vec![vec![0.5, 0.25], vec![0.0, 0.25]]).unwrap();
        // k_0 = round(4 * 0.25) = 1; examples 0 and 1 tie at 0.2.
        let r = errors_pbc(&p, &y, &q, RankRule::SelfConfidence).unwrap();
        assert_eq!(r.flagged, vec![0]);
    }

    #[test]
    fn pbnr_worked_example_flags_largest_margin() {
        let (p, y) = eight_example_instance();
        let q = JointMatrix::from_rows(vec![vec![0.375, 0.125], vec![0.0, 0.5]]).unwrap();
        // Budget for pair (0, 1) is 1; example 3 maximizes p1 - p0.
        let r = errors_pbnr(&p, &y, &q, RankRule::NormalizedMargin).unwrap();
        assert_eq!(r.flagged, vec![3]);
    }

    #[test]
    fn pbnr_diagonal_joint_flags_nothing() {
        let (p, y) = eight_example_instance();
        let q = JointMatrix::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let r = errors_pbnr(&p, &y, &q, RankRule::NormalizedMargin).unwrap();
        assert!(r.flagged.is_empty());
    }

    #[test]
    fn pbnr_unions_overlapping_pair_selections() {
        // Example 2 has the best margin for both (0,1) and (0,2); it must
        // be flagged once, without refilling either budget.
        let p = ProbMatrix::new(
            6,
            3,
            vec![
                0.8, 0.1, 0.1, //
                0.7, 0.2, 0.1, //
                0.1, 0.5, 0.4, //
                0.1, 0.8, 0.1, //
                0.1, 0.1, 0.8, //
                0.2, 0.2, 0.6,
            ],
        )
        .unwrap();
        let y = LabelVector::new(vec![0, 0, 0, 1, 2, 2], 3).unwrap();
        let q = JointMatrix::from_rows(vec![
            vec![0.2, 1.0 / 6.0, 1.0 / 6.0],
            vec![0.0, 1.0 / 6.0, 0.0],
            vec![0.0, 0.0, 0.3],
        ])
        .unwrap();
        // Budgets: (0,1) -> round(6/6) = 1 and (0,2) -> 1, both pick
        // example 2.
        let r = errors_pbnr(&p, &y, &q, RankRule::NormalizedMargin).unwrap();
        assert_eq!(r.flagged, vec![2]);
    }

    #[test]
    fn cnr_is_the_intersection() {
        let (p, y) = eight_example_instance();
        let q = JointMatrix::from_rows(vec![vec![0.375, 0.125], vec![0.0, 0.5]]).unwrap();
        let pbc = errors_pbc(&p, &y, &q, RankRule::SelfConfidence)
            .unwrap()
            .flagged_set();
        let pbnr = errors_pbnr(&p, &y, &q, RankRule::SelfConfidence)
            .unwrap()
            .flagged_set();
        let cnr = errors_cnr(&p, &y, &q, RankRule::SelfConfidence)
            .unwrap()
            .flagged_set();
        assert_eq!(cnr, pbc.intersection(&pbnr).copied().collect());
        assert!(cnr.is_subset(&pbc));
        assert!(cnr.is_subset(&pbnr));
    }

    #[test]
    fn cnr_empty_when_either_side_is_empty() {
        let (p, y) = demo();
        let q = JointMatrix::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let r = errors_cnr(&p, &y, &q, RankRule::NormalizedMargin).unwrap();
        assert!(r.flagged.is_empty());
    }

    #[test]
    fn margin_scores_match_the_formula() {
        let p = ProbMatrix::new(2, 2, vec![0.1, 0.9, 0.5, 0.5]).unwrap();
        let y = LabelVector::new(vec![0, 1], 2).unwrap();
        let flagged: BTreeSet<usize> = [0, 1].into_iter().collect();
        let r = rank_errors(&p, &y, &flagged, RankRule::NormalizedMargin, Method::Cj).unwrap();
        assert_eq!(r.flagged, vec![0, 1]);
        assert!((r.scores[0] - (-0.8)).abs() < 1e-12);
        assert!((r.scores[1] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_is_ascending_and_a_permutation() {
        let p = ProbMatrix::new(
            3,
            2,
            vec![0.1, 0.9, 0.4, 0.6, 0.55, 0.45],
        )
        .unwrap();
        let y = LabelVector::new(vec![0, 0, 1], 2).unwrap();
        let flagged: BTreeSet<usize> = [0, 1, 2].into_iter().collect();
        let r = rank_errors(&p, &y, &flagged, RankRule::NormalizedMargin, Method::Cj).unwrap();
        assert_eq!(r.flagged, vec![0, 1, 2]);
        assert!(r.scores.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(r.flagged_set(), flagged);
    }

    #[test]
    fn out_of_range_flag_is_rejected() {
        let (p, y) = demo();
        let flagged: BTreeSet<usize> = [9].into_iter().collect();
        let err = rank_errors(&p, &y, &flagged, RankRule::SelfConfidence, Method::Cj).unwrap_err();
        assert_eq!(err, Error::IndexOutOfRange { index: 9, len: 4 });
    }

    #[test]
    fn prune_keeps_the_complement() {
        let (p, y) = demo();
        let q = JointMatrix::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let empty = errors_cj(&p, &y, RankRule::NormalizedMargin).unwrap();
        let all_kept = prune(&y, &empty, &q).unwrap();
        assert_eq!(all_kept.kept, vec![0, 1, 2, 3]);
        assert_eq!(all_kept.class_weights, vec![1.0, 1.0]);

        let confusion = errors_confusion(&p, &y, RankRule::NormalizedMargin).unwrap();
        let pruned = prune(&y, &confusion, &q).unwrap();
        assert_eq!(pruned.kept, vec![0, 2, 3]);
    }
}
