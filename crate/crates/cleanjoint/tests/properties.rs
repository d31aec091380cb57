//! Property tests for cross-module invariants on randomized inputs.

use std::collections::BTreeSet;

use proptest::prelude::*;

use cleanjoint::confident::{compute_thresholds, confident_joint, confusion_joint};
use cleanjoint::estimate::{calibrate, latent_estimates};
use cleanjoint::eval::score_errors;
use cleanjoint::matrix::{validate_inputs, CountMatrix, CountRole};
use cleanjoint::noise_lab::{flip_labels, gen_noise_matrix, NoiseSpec};
use cleanjoint::rank_prune::{errors_cnr, errors_pbc, errors_pbnr, RankRule};
use cleanjoint::{JointMatrix, LabelVector, ProbMatrix};

/// A dataset with every class present and probabilities in [0, 1].
fn instance_strategy() -> impl Strategy<Value = (ProbMatrix, LabelVector)> {
    (2usize..5)
        .prop_flat_map(|m| {
            let labels = proptest::collection::vec(0..m, 3 * m..40).prop_map(move |mut ls| {
                // Force every class to appear.
                for (c, slot) in ls.iter_mut().take(m).enumerate() {
                    *slot = c;
                }
                ls
            });
            let rows = 3 * m..40usize;
            (Just(m), labels, rows)
        })
        .prop_flat_map(|(m, labels, _)| {
            let n = labels.len();
            let data = proptest::collection::vec(0.0f64..=1.0, n * m);
            (Just(m), Just(labels), data)
        })
        .prop_map(|(m, labels, data)| {
            let n = labels.len();
            (
                ProbMatrix::new(n, m, data).unwrap(),
                LabelVector::new(labels, m).unwrap(),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validation_accepts_generated_instances((probs, labels) in instance_strategy()) {
        prop_assert!(validate_inputs(&probs, &labels).is_ok());
    }

    #[test]
    fn confident_joint_conserves_rows((probs, labels) in instance_strategy()) {
        let t = compute_thresholds(&probs, &labels).unwrap();
        let (cj, bins) = confident_joint(&probs, &labels, &t).unwrap();
        let confusion = confusion_joint(&probs, &labels).unwrap();
        let sizes = labels.class_counts();
        for (i, &size) in sizes.iter().enumerate() {
            let cj_row: u64 = cj.row(i).iter().sum();
            let cf_row: u64 = confusion.row(i).iter().sum();
            prop_assert!(cj_row <= size as u64);
            prop_assert_eq!(cf_row, size as u64);
        }
        prop_assert!(cj.total() <= labels.len() as u64);
        // Counts and assignment describe the same partition.
        let assigned = bins.bins().iter().filter(|b| b.is_some()).count() as u64;
        prop_assert_eq!(assigned, cj.total());
    }

    #[test]
    fn calibration_invariants_hold((probs, labels) in instance_strategy()) {
        let t = compute_thresholds(&probs, &labels).unwrap();
        let (counts, _) = confident_joint(&probs, &labels, &t).unwrap();
        let joint = calibrate(&counts, &labels).unwrap().joint;
        let n = labels.len() as f64;
        let grand: f64 = joint.data().iter().sum();
        prop_assert!((grand - 1.0).abs() < 1e-9);
        for (i, &size) in labels.class_counts().iter().enumerate() {
            let row_sum: f64 = joint.row(i).iter().sum();
            prop_assert!((row_sum - size as f64 / n).abs() < 1e-9);
        }
    }

    #[test]
    fn latent_chain_reconstructs_the_joint((probs, labels) in instance_strategy()) {
        let t = compute_thresholds(&probs, &labels).unwrap();
        let (counts, _) = confident_joint(&probs, &labels, &t).unwrap();
        let joint = calibrate(&counts, &labels).unwrap().joint;
        if let Ok(est) = latent_estimates(&joint) {
            for i in 0..joint.classes() {
                for j in 0..joint.classes() {
                    let rebuilt = est.noise_transition.get(i, j) * est.latent_prior.get(j);
                    prop_assert!((rebuilt - joint.get(i, j)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn cnr_is_contained_in_both_sides((probs, labels) in instance_strategy()) {
        let t = compute_thresholds(&probs, &labels).unwrap();
        let (counts, _) = confident_joint(&probs, &labels, &t).unwrap();
        let joint = calibrate(&counts, &labels).unwrap().joint;
        let pbc = errors_pbc(&probs, &labels, &joint, RankRule::SelfConfidence).unwrap().flagged_set();
        let pbnr = errors_pbnr(&probs, &labels, &joint, RankRule::SelfConfidence).unwrap().flagged_set();
        let cnr = errors_cnr(&probs, &labels, &joint, RankRule::SelfConfidence).unwrap().flagged_set();
        prop_assert!(cnr.is_subset(&pbc));
        prop_assert!(cnr.is_subset(&pbnr));
        prop_assert_eq!(cnr, pbc.intersection(&pbnr).copied().collect::<BTreeSet<_>>());
    }

    #[test]
    fn pbc_budgets_are_exact((probs, labels) in instance_strategy()) {
        let t = compute_thresholds(&probs, &labels).unwrap();
        let (counts, _) = confident_joint(&probs, &labels, &t).unwrap();
        let joint = calibrate(&counts, &labels).unwrap().joint;
        let report = errors_pbc(&probs, &labels, &joint, RankRule::SelfConfidence).unwrap();
        let flagged = report.flagged_set();
        let n = labels.len() as f64;
        for (i, &size) in labels.class_counts().iter().enumerate() {
            let mass: f64 = (0..labels.classes()).filter(|&j| j != i).map(|j| joint.get(i, j)).sum();
            let budget = (((n * mass) + 0.5).floor() as usize).min(size);
            let flagged_in_class = labels
                .as_slice()
                .iter()
                .enumerate()
                .filter(|&(k, &l)| l == i && flagged.contains(&k))
                .count();
            prop_assert_eq!(flagged_in_class, budget);
        }
    }

    #[test]
    fn sparsity_is_permutation_invariant(
        perm_seed in 0u64..1000,
        rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), 4),
    ) {
        // Build a joint by zeroing some cells and normalizing.
        let mut cells = rows;
        for (i, row) in cells.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if (i * 31 + j * 17 + perm_seed as usize).is_multiple_of(3) && i != j {
                    *v = 0.0;
                }
                if i == j {
                    *v += 0.3;
                }
            }
        }
        let total: f64 = cells.iter().flatten().sum();
        for row in cells.iter_mut() {
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let q = JointMatrix::from_rows(cells.clone()).unwrap();

        // Any permutation of classes preserves the off-diagonal zero count.
        let m = 4usize;
        let mut perm: Vec<usize> = (0..m).collect();
        let mut s = perm_seed;
        for i in (1..m).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (s >> 33) as usize % (i + 1);
            perm.swap(i, j);
        }
        let permuted_rows: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| cells[perm[i]][perm[j]]).collect())
            .collect();
        let permuted = JointMatrix::from_rows(permuted_rows).unwrap();
        prop_assert_eq!(q.sparsity(0.0), permuted.sparsity(0.0));
    }

    #[test]
    fn metrics_are_permutation_invariant(
        n in 5usize..40,
        flag_bits in proptest::collection::vec(proptest::bool::ANY, 40),
        flip_bits in proptest::collection::vec(proptest::bool::ANY, 40),
        rotation in 0usize..40,
    ) {
        let flagged: BTreeSet<usize> = (0..n).filter(|&k| flag_bits[k]).collect();
        let flips: BTreeSet<usize> = (0..n).filter(|&k| flip_bits[k]).collect();
        let rotate = |s: &BTreeSet<usize>| -> BTreeSet<usize> {
            s.iter().map(|&k| (k + rotation) % n).collect()
        };
        let a = score_errors(&flagged, &flips, n).unwrap();
        let b = score_errors(&rotate(&flagged), &rotate(&flips), n).unwrap();
        prop_assert!((a.accuracy - b.accuracy).abs() < 1e-12);
        prop_assert!((a.precision - b.precision).abs() < 1e-12);
        prop_assert!((a.recall - b.recall).abs() < 1e-12);
        prop_assert!((a.f1 - b.f1).abs() < 1e-12);
    }

    #[test]
    fn generated_noise_matrices_hit_their_targets(
        seed in 0u64..500,
        classes in 3usize..7,
        noise in 0.05f64..0.35,
        sparsity_steps in 0usize..3,
    ) {
        let sparsity = sparsity_steps as f64 * 0.2;
        let trace = classes as f64 * (1.0 - noise);
        let spec = NoiseSpec::uniform_prior(classes, trace, sparsity, seed);
        let q = gen_noise_matrix(&spec).unwrap();
        prop_assert!((q.trace() - trace).abs() < 1e-6);
        prop_assert!(q.diagonal_dominates());
        let target_zeros = (sparsity * (classes * (classes - 1)) as f64).round() as usize;
        let zeros = (0..classes)
            .flat_map(|i| (0..classes).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && q.get(i, j) == 0.0)
            .count();
        prop_assert_eq!(zeros, target_zeros);
        for j in 0..classes {
            let col: f64 = q.column(j).iter().sum();
            prop_assert!((col - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn flip_determinism_and_class_conservation(seed in 0u64..200) {
        let spec = NoiseSpec::uniform_prior(4, 3.4, 0.25, seed);
        let q = gen_noise_matrix(&spec).unwrap();
        let y = LabelVector::new((0..400).map(|k| k % 4).collect(), 4).unwrap();
        let a = flip_labels(&y, &q, seed).unwrap();
        let b = flip_labels(&y, &q, seed).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
        prop_assert_eq!(a.classes(), 4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// CSV write-then-read reproduces every double bit-for-bit.
    #[test]
    fn csv_round_trip_is_lossless(
        rows in proptest::collection::vec(
            proptest::collection::vec(
                prop_oneof![
                    -1.0e12f64..1.0e12,
                    proptest::num::f64::POSITIVE | proptest::num::f64::NEGATIVE,
                ],
                3,
            ),
            1..12,
        ),
        tag in 0u64..u64::MAX,
    ) {
        let dir = std::env::temp_dir().join("cleanjoint-prop-csv");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("{tag}.csv"));
        cleanjoint::io::write_matrix(&path, &rows).unwrap();
        let back = cleanjoint::io::read_matrix(&path).unwrap();
        std::fs::remove_file(&path).ok();
        prop_assert_eq!(rows, back);
    }
}

/// End to end on a synthetic instance satisfying the exact-recovery
/// hypotheses: pruning with the confident-joint flags keeps exactly the
/// clean examples.
#[test]
fn prune_keeps_exactly_the_clean_examples_on_ideal_instances() {
    use cleanjoint::noise_lab::{gen_probs_ideal, synthesize, NoiseSpec};
    use cleanjoint::rank_prune::{errors_cj, prune};

    let spec = NoiseSpec::uniform_prior(4, 3.2, 0.2, 77);
    let inst = synthesize(&spec, 2000).unwrap();
    assert!(inst.realized_transition.diagonal_dominates());
    let probs = gen_probs_ideal(&inst.y_true, &inst.realized_transition).unwrap();
    let report = errors_cj(&probs, &inst.y_noisy, RankRule::NormalizedMargin).unwrap();
    assert_eq!(report.flagged_set(), inst.true_flips);

    let t = compute_thresholds(&probs, &inst.y_noisy).unwrap();
    let (counts, _) = confident_joint(&probs, &inst.y_noisy, &t).unwrap();
    let joint = calibrate(&counts, &inst.y_noisy).unwrap().joint;
    let pruned = prune(&inst.y_noisy, &report, &joint).unwrap();
    let kept: BTreeSet<usize> = pruned.kept.into_iter().collect();
    let clean: BTreeSet<usize> = (0..2000).filter(|k| !inst.true_flips.contains(k)).collect();
    assert_eq!(kept, clean);
    for (i, &w) in pruned.class_weights.iter().enumerate() {
        assert!(w >= 1.0, "weight for class {i} is {w}");
    }
}

/// Calibrated counts stay exactly recoverable when every row is fully
/// counted, confirming calibration is a pure rescale in that case.
#[test]
fn calibrate_is_idempotent_on_fully_counted_instances() {
    let labels = LabelVector::new(
        (0..30).map(|k| k % 3).collect::<Vec<_>>(),
        3,
    )
    .unwrap();
    let counts = CountMatrix::new(
        3,
        vec![7, 2, 1, 0, 9, 1, 3, 3, 4],
        CountRole::ConfidentJoint,
    )
    .unwrap();
    let joint = calibrate(&counts, &labels).unwrap().joint;
    let n = labels.len() as f64;
    for i in 0..3 {
        for j in 0..3 {
            assert!((joint.get(i, j) * n - counts.get(i, j) as f64).abs() < 1e-9);
        }
    }
}
