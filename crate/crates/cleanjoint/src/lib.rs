//! Estimate the joint distribution of noisy and true labels from
//! out-of-sample predicted probabilities, find likely label errors by
//! rank-and-prune counting, and stress-test the estimators on synthetic
//! noise with known ground truth.
//!
//! The pipeline in one pass:
//!
//! 1. [`confident::compute_thresholds`] turns probabilities and noisy
//!    labels into per-class confidence thresholds (the mean
//!    self-confidence of each class).
//! 2. [`confident::confident_joint`] partitions examples into
//!    (given label, inferred latent label) bins against those
//!    thresholds; [`confident::confusion_joint`] is the plain argmax
//!    baseline.
//! 3. [`estimate::calibrate`] rescales the counts into a joint
//!    distribution whose row sums match the observed class marginals,
//!    and [`estimate::latent_estimates`] derives the noise transition
//!    matrix, the mixing matrix, and both priors from it.
//! 4. [`rank_prune`] flags label-error candidates five different ways
//!    and orders them by normalized margin or self-confidence.
//! 5. [`noise_lab`] generates noise matrices with controlled trace and
//!    sparsity, flips labels through them, produces ideal or diffracted
//!    probabilities, and checks learnability bounds.
//! 6. [`eval`] scores flag sets and joint estimates against synthetic
//!    ground truth and runs the executable robustness suites.
//!
//! All indices are 0-based. Determinism is a contract: the same seed
//! produces bit-identical matrices, labels, and probabilities.

pub mod confident;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod io;
pub mod matrix;
pub mod noise_lab;
pub mod rank_prune;

pub use error::{Error, Result};
pub use matrix::{
    validate_inputs, ConditionalMatrix, CountMatrix, CountRole, JointMatrix, LabelVector,
    Orientation, PriorVector, ProbMatrix,
};
