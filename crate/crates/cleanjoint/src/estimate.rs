//! Calibration of count matrices into a joint distribution and the
//! latent matrices derived from it.

use crate::error::{Error, Result};
use crate::matrix::{
    kahan_sum, ConditionalMatrix, CountMatrix, JointMatrix, LabelVector, Orientation, PriorVector,
};

/// A calibrated joint plus any repairs applied on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedJoint {
    pub joint: JointMatrix,
    /// Classes whose count row summed to zero and was replaced by a
    /// one-hot diagonal row (the least-noise fallback) before
    /// calibration. Surface these as warnings in any report.
    pub zero_row_fallbacks: Vec<usize>,
}

/// Calibrate counts so that row sums match the observed class marginals
/// |X_i| / n and the grand sum is 1.
///
/// Each row is first normalized to its class size, then the whole matrix
/// is normalized to total mass 1. A row of zero counts has no direction
/// of its own; it is replaced by all mass on the diagonal and reported
/// in `zero_row_fallbacks`.
pub fn calibrate(counts: &CountMatrix, labels: &LabelVector) -> Result<CalibratedJoint> {
    let m = counts.classes();
    if m != labels.classes() {
        return Err(Error::ShapeMismatch {
            left: (m, m),
            right: (labels.classes(), labels.classes()),
        });
    }
    let class_sizes = labels.class_counts();
    let mut scaled = vec![0.0f64; m * m];
    let mut zero_row_fallbacks = Vec::new();
    for i in 0..m {
        let row_sum: u64 = counts.row(i).iter().sum();
        let size = class_sizes[i] as f64;
        if row_sum == 0 {
            scaled[i * m + i] = size;
            zero_row_fallbacks.push(i);
        } else {
            for j in 0..m {
                scaled[i * m + j] = counts.get(i, j) as f64 / row_sum as f64 * size;
            }
        }
    }
    let total = kahan_sum(scaled.iter().copied());
    for v in &mut scaled {
        *v /= total;
    }
    Ok(CalibratedJoint {
        joint: JointMatrix::new(m, scaled)?,
        zero_row_fallbacks,
    })
}

/// The latent matrices and priors derived from a calibrated joint.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEstimates {
    /// Prior of the true labels (column sums of the joint).
    pub latent_prior: PriorVector,
    /// Flipping rates p(noisy = i | true = j), column-stochastic.
    pub noise_transition: ConditionalMatrix,
    /// Mixing rates p(true = j | noisy = i), column-stochastic.
    pub mixing: ConditionalMatrix,
    /// Prior of the observed noisy labels (row sums of the joint).
    pub noisy_prior: PriorVector,
}

/// Derive priors, the noise transition matrix, and the mixing matrix
/// from a calibrated joint.
pub fn latent_estimates(joint: &JointMatrix) -> Result<LatentEstimates> {
    let m = joint.classes();
    let latent = joint.col_sums();
    let noisy = joint.row_sums();
    if let Some(class) = latent.iter().position(|&v| v <= 0.0) {
        return Err(Error::DegenerateClass { class });
    }
    if let Some(class) = noisy.iter().position(|&v| v <= 0.0) {
        return Err(Error::DegenerateClass { class });
    }
    let mut transition = vec![0.0f64; m * m];
    let mut mixing = vec![0.0f64; m * m];
    for i in 0..m {
        for j in 0..m {
            // p(noisy=i | true=j), conditioning class j on the column.
            transition[i * m + j] = joint.get(i, j) / latent[j];
            // p(true=j | noisy=i), conditioning class i on the column.
            mixing[j * m + i] = joint.get(i, j) / noisy[i];
        }
    }
    Ok(LatentEstimates {
        latent_prior: PriorVector::new(latent)?,
        noise_transition: ConditionalMatrix::new(m, transition, Orientation::NoiseTransition)?,
        mixing: ConditionalMatrix::new(m, mixing, Orientation::Mixing)?,
        noisy_prior: PriorVector::new(noisy)?,
    })
}

/// Loss reweighting factors: w_i = p(true = i) / p(noisy = i, true = i),
/// i.e. the reciprocal of p(noisy = i | true = i).
pub fn class_weights(joint: &JointMatrix) -> Result<Vec<f64>> {
    let latent = joint.col_sums();
    (0..joint.classes())
        .map(|i| {
            let diag = joint.get(i, i);
            if diag <= 0.0 {
                Err(Error::ZeroDiagonal { class: i })
            } else {
                Ok(latent[i] / diag)
            }
        })
        .collect()
}
