//! Synthetic noise: generate noise transition matrices with controlled
//! trace and sparsity, flip labels through them, produce ideal and
//! diffracted probability matrices, and evaluate learnability bounds.
//!
//! Everything here is seeded and deterministic: the generator is
//! ChaCha8, uniforms take the top 53 bits of each 64-bit word, and all
//! derived draws (ranges, exponentials, shuffles) are built from those
//! uniforms, so a seed pins the output bit-for-bit.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::confident::compute_thresholds;
use crate::error::{Error, Result};
use crate::matrix::{ConditionalMatrix, JointMatrix, LabelVector, Orientation, PriorVector, ProbMatrix};

/// Strict margin kept between every off-diagonal entry and both
/// diagonals it competes with when dominance is requested. A visible
/// margin (rather than any epsilon) keeps the dominance property intact
/// in the empirical transition matrix of a finite flipped dataset.
const DOMINANCE_MARGIN: f64 = 0.05;

/// Attempts before the generator gives up on a spec.
const MAX_ATTEMPTS: usize = 1000;

pub(crate) struct Rng(ChaCha8Rng);

impl Rng {
    pub(crate) fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub(crate) fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub(crate) fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        let v = lo + self.uniform() * (hi - lo);
        if v >= hi {
            hi.next_down()
        } else {
            v
        }
    }

    /// Standard exponential draw (for Dirichlet proportions).
    pub(crate) fn exponential(&mut self) -> f64 {
        -(1.0 - self.uniform()).ln()
    }

    pub(crate) fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = (self.0.next_u64() % (i as u64 + 1)) as usize;
            slice.swap(i, j);
        }
    }
}

/// Mix a base seed with a stream tag so each stage of a pipeline gets
/// an independent, reproducible stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // SplitMix64 finalizer.
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Parameters for a synthetic noise transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub classes: usize,
    /// Target trace of the transition matrix, in (1, m].
    pub trace: f64,
    /// Target fraction of off-diagonal entries that are exactly zero.
    pub sparsity: f64,
    pub seed: u64,
    /// Prior of the true labels; also drives label sampling.
    pub latent_prior: PriorVector,
    /// Require every diagonal to strictly maximize its row and column.
    pub dominance: bool,
}

impl NoiseSpec {
    pub fn uniform_prior(classes: usize, trace: f64, sparsity: f64, seed: u64) -> Self {
        Self {
            classes,
            trace,
            sparsity,
            seed,
            latent_prior: PriorVector::uniform(classes),
            dominance: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InfeasibleSpec {
                detail: format!("need at least 2 classes, got {}", self.classes),
            });
        }
        if self.trace <= 1.0 {
            return Err(Error::InfeasibleSpec {
                detail: format!("trace {} violates the trace bound (must exceed 1)", self.trace),
            });
        }
        if self.trace > self.classes as f64 {
            return Err(Error::InfeasibleSpec {
                detail: format!("trace {} exceeds the class count {}", self.trace, self.classes),
            });
        }
        if !(0.0..1.0).contains(&self.sparsity) && self.trace < self.classes as f64 {
            return Err(Error::InfeasibleSpec {
                detail: format!("sparsity {} must lie in [0, 1)", self.sparsity),
            });
        }
        if self.latent_prior.len() != self.classes {
            return Err(Error::InfeasibleSpec {
                detail: "latent prior length does not match the class count".into(),
            });
        }
        if self.latent_prior.values().iter().any(|&p| p <= 0.0) {
            return Err(Error::InfeasibleSpec {
                detail: "latent prior must be strictly positive".into(),
            });
        }
        Ok(())
    }
}

/// Generate a column-stochastic noise transition matrix hitting the
/// requested trace exactly and the requested sparsity to within one
/// off-diagonal entry.
///
/// Construction, retried up to 1000 times on an unlucky draw: split the
/// trace deficit `m - trace` across columns proportionally to random
/// weights, place the zero cells uniformly at random while keeping every
/// mass-bearing column at least one open cell, spread each column's
/// deficit over its open cells with flat Dirichlet proportions, then
/// project the cells under their dominance caps.
pub fn gen_noise_matrix(spec: &NoiseSpec) -> Result<ConditionalMatrix> {
    spec.validate()?;
    let m = spec.classes;
    if (spec.trace - m as f64).abs() < 1e-12 {
        return Ok(ConditionalMatrix::identity(m, Orientation::NoiseTransition));
    }
    let mut rng = Rng::new(derive_seed(spec.seed, 0x6e6f_6973));
    let target_zeros = (spec.sparsity * (m * (m - 1)) as f64).round() as usize;
    for _ in 0..MAX_ATTEMPTS {
        if let Some(matrix) = attempt_noise_matrix(spec, target_zeros, &mut rng)? {
            return Ok(matrix);
        }
    }
    Err(Error::InfeasibleSpec {
        detail: format!(
            "no matrix with classes={m}, trace={}, sparsity={} found in {MAX_ATTEMPTS} attempts",
            spec.trace, spec.sparsity
        ),
    })
}

fn attempt_noise_matrix(
    spec: &NoiseSpec,
    target_zeros: usize,
    rng: &mut Rng,
) -> Result<Option<ConditionalMatrix>> {
    let m = spec.classes;
    let deficit_total = m as f64 - spec.trace;

    // Trace deficit per column, proportional to bounded random weights.
    let weights: Vec<f64> = (0..m).map(|_| 0.75 + 0.5 * rng.uniform()).collect();
    let weight_sum: f64 = weights.iter().sum();
    let deficits: Vec<f64> = weights
        .iter()
        .map(|w| deficit_total * w / weight_sum)
        .collect();
    let diags: Vec<f64> = deficits.iter().map(|d| 1.0 - d).collect();
    if diags.iter().any(|&d| d <= 0.05) {
        return Ok(None);
    }

    // Zero placement: any column carrying mass keeps at least one open cell.
    let needs_mass: Vec<bool> = deficits.iter().map(|&d| d > 1e-12).collect();
    let needy = needs_mass.iter().filter(|&&b| b).count();
    if target_zeros + needy > m * (m - 1) {
        return Ok(None);
    }
    let mut cells: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j)
        .collect();
    rng.shuffle(&mut cells);
    let mut open_in_col = vec![m - 1; m];
    let mut is_zero = vec![false; m * m];
    let mut placed = 0;
    for &(i, j) in &cells {
        if placed == target_zeros {
            break;
        }
        if needs_mass[j] && open_in_col[j] == 1 {
            continue;
        }
        is_zero[i * m + j] = true;
        open_in_col[j] -= 1;
        placed += 1;
    }
    if placed < target_zeros {
        return Ok(None);
    }

    // Fill each column's open cells with Dirichlet(1, ..., 1) shares of
    // its deficit, then project under the dominance caps.
    let mut data = vec![0.0f64; m * m];
    for j in 0..m {
        data[j * m + j] = diags[j];
        if !needs_mass[j] {
            continue;
        }
        let open: Vec<usize> = (0..m).filter(|&i| i != j && !is_zero[i * m + j]).collect();
        let mut shares: Vec<f64> = open.iter().map(|_| rng.exponential()).collect();
        let share_sum: f64 = shares.iter().sum();
        for s in &mut shares {
            *s = *s / share_sum * deficits[j];
        }
        if spec.dominance {
            let caps: Vec<f64> = open
                .iter()
                .map(|&i| diags[i].min(diags[j]) - DOMINANCE_MARGIN)
                .collect();
            if caps.iter().any(|&c| c <= 1e-9) {
                return Ok(None);
            }
            if caps.iter().sum::<f64>() <= deficits[j] {
                return Ok(None);
            }
            if !project_under_caps(&mut shares, &caps) {
                return Ok(None);
            }
        }
        for (&i, &v) in open.iter().zip(shares.iter()) {
            data[i * m + j] = v;
        }
    }

    // Column renormalization only smooths float round-off; the structure
    // (zeros, trace, dominance) is already in place.
    for j in 0..m {
        let sum: f64 = (0..m).map(|i| data[i * m + j]).sum();
        for i in 0..m {
            data[i * m + j] /= sum;
        }
    }
    let matrix = ConditionalMatrix::new(m, data, Orientation::NoiseTransition)?;
    if (matrix.trace() - spec.trace).abs() > 1e-6 {
        return Ok(None);
    }
    if spec.dominance && !matrix.diagonal_dominates() {
        return Ok(None);
    }
    Ok(Some(matrix))
}

/// Clip shares at their caps and push the excess onto unclipped cells,
/// preserving the total. Returns false if the caps cannot hold the mass.
fn project_under_caps(shares: &mut [f64], caps: &[f64]) -> bool {
    for _ in 0..shares.len() {
        let mut excess = 0.0;
        let mut free_total = 0.0;
        for (s, &c) in shares.iter_mut().zip(caps.iter()) {
            if *s > c {
                excess += *s - c;
                *s = c;
            } else if *s < c {
                free_total += c - *s;
            }
        }
        if excess <= 1e-15 {
            return true;
        }
        if free_total < excess {
            return false;
        }
        // Spread the excess proportionally to each cell's remaining headroom.
        let scale = excess / free_total;
        for (s, &c) in shares.iter_mut().zip(caps.iter()) {
            if *s < c {
                *s += (c - *s) * scale;
            }
        }
    }
    true
}

/// Sample true labels from a latent prior.
pub fn sample_labels(prior: &PriorVector, n: usize, seed: u64) -> Result<LabelVector> {
    let mut rng = Rng::new(derive_seed(seed, 0x6c61_6265));
    let labels = (0..n)
        .map(|_| {
            let u = rng.uniform();
            let mut cum = 0.0;
            for (c, &p) in prior.values().iter().enumerate() {
                cum += p;
                if u < cum {
                    return c;
                }
            }
            prior.len() - 1
        })
        .collect();
    LabelVector::new(labels, prior.len())
}

/// Flip each label independently through the noise transition matrix:
/// the noisy label of an example with true class `j` is drawn from
/// column `j`.
pub fn flip_labels(
    y_true: &LabelVector,
    noise: &ConditionalMatrix,
    seed: u64,
) -> Result<LabelVector> {
    if noise.classes() != y_true.classes() {
        return Err(Error::ShapeMismatch {
            left: (noise.classes(), noise.classes()),
            right: (y_true.classes(), y_true.classes()),
        });
    }
    let m = noise.classes();
    let mut rng = Rng::new(derive_seed(seed, 0x666c_6970));
    let labels = y_true
        .as_slice()
        .iter()
        .map(|&true_class| {
            let u = rng.uniform();
            let mut cum = 0.0;
            for i in 0..m {
                cum += noise.get(i, true_class);
                if u < cum {
                    return i;
                }
            }
            m - 1
        })
        .collect();
    LabelVector::new(labels, m)
}

/// How to perturb ideal probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffractionSpec {
    /// Row k is column y*_k of the transition matrix, unperturbed.
    Ideal,
    /// Per-class linear maps: p -> `scale[j] * p + offset[j]`, scale > 0.
    PerClass { scale: Vec<f64>, offset: Vec<f64> },
    /// Per-example noise around per-class means, sampled inside the
    /// residual range between each ideal probability and its class
    /// threshold, so no entry changes sides of the (shifted) threshold.
    PerExample { mean: Vec<f64>, seed: u64 },
}

/// Ideal probabilities: the predicted probability vector of an example
/// equals the transition-matrix column of its true class.
pub fn gen_probs_ideal(y_true: &LabelVector, noise: &ConditionalMatrix) -> Result<ProbMatrix> {
    if noise.classes() != y_true.classes() {
        return Err(Error::ShapeMismatch {
            left: (noise.classes(), noise.classes()),
            right: (y_true.classes(), y_true.classes()),
        });
    }
    let m = noise.classes();
    let mut data = Vec::with_capacity(y_true.len() * m);
    for &true_class in y_true.as_slice() {
        for j in 0..m {
            data.push(noise.get(j, true_class));
        }
    }
    ProbMatrix::new(y_true.len(), m, data)
}

/// Apply per-class linear maps to an existing probability matrix.
/// Outputs may leave [0, 1]; counting only depends on the ranking.
pub fn per_class_diffract(probs: &ProbMatrix, scale: &[f64], offset: &[f64]) -> Result<ProbMatrix> {
    let m = probs.cols();
    if scale.len() != m || offset.len() != m {
        return Err(Error::ShapeMismatch {
            left: (scale.len(), offset.len()),
            right: (m, m),
        });
    }
    if let Some(class) = scale.iter().position(|&s| s <= 0.0) {
        return Err(Error::NotStochastic {
            detail: format!("per-class scale for class {class} must be positive"),
        });
    }
    let data = probs
        .data()
        .iter()
        .enumerate()
        .map(|(idx, &p)| {
            let j = idx % m;
            scale[j] * p + offset[j]
        })
        .collect();
    ProbMatrix::new_unnormalized(probs.rows(), m, data)
}

/// Generate predicted probabilities for a synthetic dataset.
///
/// The noisy labels are only consulted in per-example mode, where the
/// residual ranges are anchored to the thresholds of the ideal matrix.
pub fn gen_probs(
    y_true: &LabelVector,
    y_noisy: &LabelVector,
    noise: &ConditionalMatrix,
    spec: &DiffractionSpec,
) -> Result<ProbMatrix> {
    match spec {
        DiffractionSpec::Ideal => gen_probs_ideal(y_true, noise),
        DiffractionSpec::PerClass { scale, offset } => {
            let ideal = gen_probs_ideal(y_true, noise)?;
            per_class_diffract(&ideal, scale, offset)
        }
        DiffractionSpec::PerExample { mean, seed } => {
            gen_probs_per_example(y_true, y_noisy, noise, mean, *seed)
        }
    }
}

/// Per-example diffraction inside the residual ranges.
///
/// With ideal probability p* and ideal threshold t for class j, the
/// perturbed probability is drawn uniformly from
///   (t + e, 2p* - t + e]  when p* >= t
///   [2p* - t + e, t + e)  when p* <  t
/// where e is the class's mean error. Sampling happens directly in
/// probability space so the side of the shifted threshold t + e is
/// exact by construction, never a rounding accident.
pub fn gen_probs_per_example(
    y_true: &LabelVector,
    y_noisy: &LabelVector,
    noise: &ConditionalMatrix,
    mean: &[f64],
    seed: u64,
) -> Result<ProbMatrix> {
    let m = noise.classes();
    if mean.len() != m {
        return Err(Error::ShapeMismatch {
            left: (mean.len(), 1),
            right: (m, 1),
        });
    }
    let ideal = gen_probs_ideal(y_true, noise)?;
    let thresholds = compute_thresholds(&ideal, y_noisy)?;
    let mut rng = Rng::new(derive_seed(seed, 0x6469_6666));
    let mut data = Vec::with_capacity(ideal.rows() * m);
    for k in 0..ideal.rows() {
        for (j, &mean_j) in mean.iter().enumerate() {
            let p_star = ideal.get(k, j);
            let t = thresholds.get(j);
            let shifted = t + mean_j;
            let value = if p_star >= t {
                let hi = 2.0 * p_star - t + mean_j;
                if hi <= shifted {
                    return Err(Error::DegenerateRange { class: j });
                }
                // Half-open (shifted, hi]: draw on [shifted, hi) and
                // remap the closed end.
                let v = rng.uniform_in(shifted, hi);
                if v <= shifted {
                    hi
                } else {
                    v
                }
            } else {
                let lo = 2.0 * p_star - t + mean_j;
                rng.uniform_in(lo, shifted)
            };
            data.push(value);
        }
    }
    ProbMatrix::new_unnormalized(ideal.rows(), m, data)
}

/// Real-valued per-class error counts for the learnability bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassCounts {
    /// Correctly labeled: noisy = k and true = k.
    pub correct: f64,
    /// Type 1: noisy = k but true != k.
    pub type1: f64,
    /// Type 2: noisy != k but true = k.
    pub type2: f64,
}

/// Outcome of the four learnability bounds for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBoundReport {
    pub class: usize,
    /// p(noisy=k) < p(noisy=k | true=k) and p(true=k) < p(true=k | noisy=k).
    pub conditional_bound: bool,
    /// p(noisy=k) * p(true=k) < p(noisy=k, true=k).
    pub product_bound: bool,
    /// Required example count: type1 * type2 / correct + type1 + type2.
    pub n_threshold: f64,
    /// n exceeds the threshold.
    pub n_bound: bool,
}

/// Pass/fail report of the learnability bounds; informational only,
/// never an error.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnabilityReport {
    pub n: f64,
    pub trace_transition: f64,
    pub trace_mixing: f64,
    /// Both conditional traces exceed 1.
    pub trace_bound: bool,
    pub per_class: Vec<ClassBoundReport>,
}

impl LearnabilityReport {
    pub fn all_pass(&self) -> bool {
        self.trace_bound
            && self
                .per_class
                .iter()
                .all(|c| c.conditional_bound && c.product_bound && c.n_bound)
    }
}

/// Evaluate the learnability bounds from a joint distribution and the
/// dataset size.
pub fn check_learnability(joint: &JointMatrix, n: usize) -> LearnabilityReport {
    let m = joint.classes();
    let rows = joint.row_sums();
    let cols = joint.col_sums();
    let counts: Vec<ClassCounts> = (0..m)
        .map(|k| {
            let diag = joint.get(k, k);
            ClassCounts {
                correct: n as f64 * diag,
                type1: n as f64 * (rows[k] - diag).max(0.0),
                type2: n as f64 * (cols[k] - diag).max(0.0),
            }
        })
        .collect();
    check_learnability_counts(&counts, n as f64)
}

/// Evaluate the learnability bounds from per-class counts.
pub fn check_learnability_counts(counts: &[ClassCounts], n: f64) -> LearnabilityReport {
    let mut trace_transition = 0.0;
    let mut trace_mixing = 0.0;
    let per_class = counts
        .iter()
        .enumerate()
        .map(|(class, c)| {
            let p_noisy = (c.correct + c.type1) / n;
            let p_true = (c.correct + c.type2) / n;
            let p_joint = c.correct / n;
            // p(noisy=k | true=k) and p(true=k | noisy=k).
            let cond_noisy_given_true = if c.correct + c.type2 > 0.0 {
                c.correct / (c.correct + c.type2)
            } else {
                0.0
            };
            let cond_true_given_noisy = if c.correct + c.type1 > 0.0 {
                c.correct / (c.correct + c.type1)
            } else {
                0.0
            };
            trace_transition += cond_noisy_given_true;
            trace_mixing += cond_true_given_noisy;
            let conditional_bound =
                p_noisy < cond_noisy_given_true && p_true < cond_true_given_noisy;
            let product_bound = p_noisy * p_true < p_joint;
            let (n_threshold, n_bound) = if c.correct > 0.0 {
                let threshold = c.type1 * c.type2 / c.correct + c.type1 + c.type2;
                (threshold, n > threshold)
            } else {
                (f64::INFINITY, false)
            };
            ClassBoundReport {
                class,
                conditional_bound,
                product_bound,
                n_threshold,
                n_bound,
            }
        })
        .collect();
    LearnabilityReport {
        n,
        trace_transition,
        trace_mixing,
        trace_bound: trace_transition > 1.0 && trace_mixing > 1.0,
        per_class,
    }
}

/// A fully materialized synthetic dataset with its ground truth.
///
/// The realized joint counts the (noisy, true) pairs that actually
/// occurred, and the realized transition is its column-normalization;
/// these, not the generating matrix, are the ground truth a finite
/// dataset carries. Ideal probabilities for theorem exercises should be
/// built from `realized_transition` so that threshold identities hold
/// exactly rather than up to sampling error.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    /// The generating transition matrix.
    pub noise_matrix: ConditionalMatrix,
    pub y_true: LabelVector,
    pub y_noisy: LabelVector,
    /// Empirical joint of (noisy, true) label pairs.
    pub realized_joint: JointMatrix,
    /// Column-normalized realized joint.
    pub realized_transition: ConditionalMatrix,
    /// Indices where the noisy label differs from the true label.
    pub true_flips: BTreeSet<usize>,
}

/// Generate a noise matrix, sample true labels from the prior, and flip
/// them. Label sampling and flipping use seed streams derived from
/// `spec.seed`.
pub fn synthesize(spec: &NoiseSpec, n: usize) -> Result<SyntheticInstance> {
    let noise_matrix = gen_noise_matrix(spec)?;
    let y_true = sample_labels(&spec.latent_prior, n, derive_seed(spec.seed, 1))?;
    let y_noisy = flip_labels(&y_true, &noise_matrix, derive_seed(spec.seed, 2))?;
    let m = spec.classes;
    let mut pair_counts = vec![0u64; m * m];
    for (&noisy, &truth) in y_noisy.as_slice().iter().zip(y_true.as_slice()) {
        pair_counts[noisy * m + truth] += 1;
    }
    let joint_data: Vec<f64> = pair_counts.iter().map(|&c| c as f64 / n as f64).collect();
    let realized_joint = JointMatrix::new(m, joint_data)?;
    let col_counts = y_true.class_counts();
    let transition_data: Vec<f64> = (0..m * m)
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            pair_counts[i * m + j] as f64 / col_counts[j] as f64
        })
        .collect();
    let realized_transition =
        ConditionalMatrix::new(m, transition_data, Orientation::NoiseTransition)?;
    let true_flips = y_noisy
        .as_slice()
        .iter()
        .zip(y_true.as_slice())
        .enumerate()
        .filter(|(_, (noisy, truth))| noisy != truth)
        .map(|(k, _)| k)
        .collect();
    Ok(SyntheticInstance {
        noise_matrix,
        y_true,
        y_noisy,
        realized_joint,
        realized_transition,
        true_flips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_equal_to_classes_gives_identity() {
        let spec = NoiseSpec::uniform_prior(4, 4.0, 0.0, 7);
        let q = gen_noise_matrix(&spec).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(q.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn generated_matrix_hits_trace_and_sparsity() {
        let spec = NoiseSpec::uniform_prior(3, 2.4, 0.5, 11);
        let q = gen_noise_matrix(&spec).unwrap();
        assert!((q.trace() - 2.4).abs() < 1e-6);
        let zeros = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && q.get(i, j) == 0.0)
            .count();
        assert_eq!(zeros, 3);
        for j in 0..3 {
            let col: f64 = q.column(j).iter().sum();
            assert!((col - 1.0).abs() < 1e-9);
        }
        assert!(q.diagonal_dominates());
    }

    #[test]
    fn trace_at_one_is_infeasible() {
        let spec = NoiseSpec::uniform_prior(3, 1.0, 0.0, 1);
        assert!(matches!(
            gen_noise_matrix(&spec),
            Err(Error::InfeasibleSpec { .. })
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = NoiseSpec::uniform_prior(5, 4.0, 0.4, 99);
        let a = gen_noise_matrix(&spec).unwrap();
        let b = gen_noise_matrix(&spec).unwrap();
        assert_eq!(a.to_rows(), b.to_rows());
    }

    #[test]
    fn generated_matrices_satisfy_the_trace_bound() {
        for seed in 0..20 {
            let spec = NoiseSpec::uniform_prior(4, 3.0, 0.25, seed);
            let q = gen_noise_matrix(&spec).unwrap();
            assert!(q.trace() > 1.0);
        }
    }

    #[test]
    fn no_dominance_mode_still_hits_trace_and_sparsity() {
        // Trace this low cannot be diagonally dominant at m = 3; the
        // relaxed mode must still deliver the structural targets.
        let spec = NoiseSpec {
            dominance: false,
            ..NoiseSpec::uniform_prior(3, 1.2, 0.0, 4)
        };
        let q = gen_noise_matrix(&spec).unwrap();
        assert!((q.trace() - 1.2).abs() < 1e-6);
        assert!(!q.diagonal_dominates());
        for j in 0..3 {
            let col: f64 = q.column(j).iter().sum();
            assert!((col - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn skewed_prior_is_accepted() {
        let prior = PriorVector::new(vec![0.09, 0.12, 0.79]).unwrap();
        let spec = NoiseSpec {
            classes: 3,
            trace: 2.4,
            sparsity: 0.0,
            seed: 5,
            latent_prior: prior,
            dominance: true,
        };
        let inst = synthesize(&spec, 4000).unwrap();
        let counts = inst.y_true.class_counts();
        // 3-sigma multinomial band around 0.79 * 4000.
        let expect = 0.79 * 4000.0;
        let sigma = (4000.0_f64 * 0.79 * 0.21).sqrt();
        assert!((counts[2] as f64 - expect).abs() < 3.0 * sigma);
    }

    #[test]
    fn identity_flip_is_a_no_op() {
        let y = LabelVector::new(vec![0, 1, 2, 0, 1, 2], 3).unwrap();
        let q = ConditionalMatrix::identity(3, Orientation::NoiseTransition);
        let flipped = flip_labels(&y, &q, 3).unwrap();
        assert_eq!(flipped.as_slice(), y.as_slice());
    }

    #[test]
    fn flip_frequencies_match_the_column_within_three_sigma() {
        let y = LabelVector::new(
            std::iter::repeat_n(0, 10000)
                .chain(std::iter::repeat_n(1, 4))
                .collect(),
            2,
        )
        .unwrap();
        let q = ConditionalMatrix::from_rows(
            vec![vec![0.6, 0.0], vec![0.4, 1.0]],
            Orientation::NoiseTransition,
        )
        .unwrap();
        let flipped = flip_labels(&y, &q, 42).unwrap();
        let flips = flipped.as_slice()[..10000]
            .iter()
            .filter(|&&l| l == 1)
            .count() as f64;
        let sigma = (10000.0_f64 * 0.4 * 0.6).sqrt();
        assert!((flips - 4000.0).abs() <= 3.0 * sigma, "flips = {flips}");
    }

    #[test]
    fn flipping_is_deterministic() {
        let y = LabelVector::new((0..1000).map(|k| k % 4).collect(), 4).unwrap();
        let spec = NoiseSpec::uniform_prior(4, 3.2, 0.25, 8);
        let q = gen_noise_matrix(&spec).unwrap();
        let a = flip_labels(&y, &q, 17).unwrap();
        let b = flip_labels(&y, &q, 17).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn ideal_probs_of_identity_are_one_hot() {
        let y = LabelVector::new(vec![0, 1, 2], 3).unwrap();
        let q = ConditionalMatrix::identity(3, Orientation::NoiseTransition);
        let p = gen_probs_ideal(&y, &q).unwrap();
        assert_eq!(p.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(p.row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(p.row(2), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn per_example_range_stays_above_threshold() {
        // p* = 0.9, t = 0.8, zero mean: every draw lands in (0.8, 1.0].
        let y_true = LabelVector::new(vec![0; 500].into_iter().chain(vec![1; 500]).collect(), 2)
            .unwrap();
        let q = ConditionalMatrix::from_rows(
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            Orientation::NoiseTransition,
        )
        .unwrap();
        let y_noisy = flip_labels(&y_true, &q, 1).unwrap();
        let ideal = gen_probs_ideal(&y_true, &q).unwrap();
        let t = compute_thresholds(&ideal, &y_noisy).unwrap();
        let p = gen_probs_per_example(&y_true, &y_noisy, &q, &[0.0, 0.0], 2).unwrap();
        for k in 0..p.rows() {
            for j in 0..2 {
                let side_ideal = ideal.get(k, j) >= t.get(j);
                let side_diffracted = p.get(k, j) >= t.get(j);
                assert_eq!(side_ideal, side_diffracted, "entry ({k}, {j}) changed sides");
            }
        }
    }

    #[test]
    fn degenerate_range_is_reported() {
        // A class whose ideal probability equals its threshold: all
        // self-confidences identical makes t exactly p*.
        let y_true = LabelVector::new(vec![0, 0, 1, 1], 2).unwrap();
        let y_noisy = y_true.clone();
        let q = ConditionalMatrix::from_rows(
            vec![vec![0.7, 0.3], vec![0.3, 0.7]],
            Orientation::NoiseTransition,
        )
        .unwrap();
        let err = gen_probs_per_example(&y_true, &y_noisy, &q, &[0.0, 0.0], 3).unwrap_err();
        assert!(matches!(err, Error::DegenerateRange { .. }));
    }

    #[test]
    fn per_example_generation_is_deterministic() {
        let spec = NoiseSpec::uniform_prior(3, 2.4, 0.0, 21);
        let inst = synthesize(&spec, 600).unwrap();
        let a = gen_probs_per_example(
            &inst.y_true,
            &inst.y_noisy,
            &inst.realized_transition,
            &[0.0; 3],
            5,
        )
        .unwrap();
        let b = gen_probs_per_example(
            &inst.y_true,
            &inst.y_noisy,
            &inst.realized_transition,
            &[0.0; 3],
            5,
        )
        .unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn ideal_thresholds_match_the_closed_form() {
        // Thresholds computed from realized-transition ideal probabilities
        // equal sum_j Q(noisy=i | true=j) * Q(true=j | noisy=i).
        let spec = NoiseSpec::uniform_prior(4, 3.2, 0.25, 13);
        let inst = synthesize(&spec, 2000).unwrap();
        let ideal = gen_probs_ideal(&inst.y_true, &inst.realized_transition).unwrap();
        let t = compute_thresholds(&ideal, &inst.y_noisy).unwrap();
        let est = crate::estimate::latent_estimates(&inst.realized_joint).unwrap();
        for i in 0..4 {
            let closed_form: f64 = (0..4)
                .map(|j| est.noise_transition.get(i, j) * est.mixing.get(j, i))
                .sum();
            assert!(
                (t.get(i) - closed_form).abs() < 1e-9,
                "class {i}: {} vs {closed_form}",
                t.get(i)
            );
        }
    }

    #[test]
    fn identity_joint_passes_all_bounds() {
        let q = JointMatrix::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let report = check_learnability(&q, 100);
        assert!(report.all_pass());
        assert!((report.trace_transition - 2.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_joint_fails_the_trace_bound() {
        let q = JointMatrix::new(2, vec![0.25; 4]).unwrap();
        let report = check_learnability(&q, 100);
        assert!((report.trace_transition - 1.0).abs() < 1e-12);
        assert!(!report.trace_bound);
        assert!(!report.all_pass());
    }

    #[test]
    fn n_bound_worked_example() {
        let counts = vec![ClassCounts {
            correct: 10.0,
            type1: 5.0,
            type2: 5.0,
        }];
        let report = check_learnability_counts(&counts, 22.0);
        assert!((report.per_class[0].n_threshold - 12.5).abs() < 1e-12);
        assert!(report.per_class[0].n_bound);
        let tight = check_learnability_counts(&counts, 12.0);
        assert!(!tight.per_class[0].n_bound);
    }

    #[test]
    fn synthesize_exposes_consistent_ground_truth() {
        let spec = NoiseSpec::uniform_prior(3, 2.4, 0.0, 31);
        let inst = synthesize(&spec, 900).unwrap();
        let flips = inst
            .y_true
            .as_slice()
            .iter()
            .zip(inst.y_noisy.as_slice())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(flips, inst.true_flips.len());
        let offdiag: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j)
            .map(|(i, j)| inst.realized_joint.get(i, j))
            .sum();
        assert!((offdiag - flips as f64 / 900.0).abs() < 1e-12);
    }
}
