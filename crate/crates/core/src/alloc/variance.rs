//! Analytic variance of the IPW mean under a plan, the Cauchy–Schwarz lower
//! bound, and the optimal-to-proportional variance ratio.

use super::{AllocError, AllocationPlan, SdVector};
use crate::frame::PopulationFrame;

/// `(1/N²) Σ N_i² σ_i² / n_i`. Zero-sd groups contribute nothing.
pub fn analytic_variance(
    frame: &PopulationFrame,
    sd: &SdVector,
    plan: &AllocationPlan,
) -> Result<f64, AllocError> {
    sd.check_len(frame.len())?;
    if plan.counts().len() != frame.len() {
        return Err(AllocError::LengthMismatch {
            expected: frame.len(),
            found: plan.counts().len(),
        });
    }
    let counts: Vec<f64> = plan.counts().iter().map(|&c| c as f64).collect();
    variance_for_counts(frame, sd, &counts)
}

/// Same formula for real-valued counts.
pub fn variance_for_counts(
    frame: &PopulationFrame,
    sd: &SdVector,
    counts: &[f64],
) -> Result<f64, AllocError> {
    sd.check_len(frame.len())?;
    let big_n = frame.total_size() as f64;
    let mut acc = 0.0;
    for (group, ((g, &s), &n)) in frame.groups().iter().zip(sd.as_slice()).zip(counts).enumerate() {
        if s == 0.0 {
            continue;
        }
        if n <= 0.0 {
            return Err(AllocError::UnsampledGroup { group });
        }
        let ns = g.size as f64 * s;
        acc += ns * ns / n;
    }
    Ok(acc / (big_n * big_n))
}

/// `(1/N²)(1/n)(Σ N_i σ_i)²`, attained by the unrounded optimal plan.
pub fn variance_lower_bound(frame: &PopulationFrame, sd: &SdVector, n: u64) -> f64 {
    let big_n = frame.total_size() as f64;
    let s: f64 = frame
        .groups()
        .iter()
        .zip(sd.as_slice())
        .map(|(g, &s)| g.size as f64 * s)
        .sum();
    s * s / (big_n * big_n * n as f64)
}

/// `V*/V0 = (Σ N_i σ_i)² / ((Σ N_i σ_i²)(Σ N_i))`, independent of the budget.
pub fn variance_ratio(frame: &PopulationFrame, sd: &SdVector) -> Result<f64, AllocError> {
    sd.check_len(frame.len())?;
    if sd.all_zero() {
        return Err(AllocError::AllZeroSd);
    }
    // Normalizing by the largest sd keeps the sums away from overflow.
    let scale = sd.as_slice().iter().cloned().fold(0.0, f64::max);
    let (mut lin, mut quad) = (0.0, 0.0);
    for (g, &s) in frame.groups().iter().zip(sd.as_slice()) {
        let n = g.size as f64;
        let r = s / scale;
        lin += n * r;
        quad += n * r * r;
    }
    Ok(lin * lin / (quad * frame.total_size() as f64))
}

/// Two equal groups with sds `[1, t]`: `(1 + t)² / (2 (1 + t²))`.
pub fn f_of_t(t: f64) -> Result<f64, AllocError> {
    if t.is_nan() || t <= 0.0 || t.is_infinite() {
        return Err(AllocError::NonpositiveRatio(t));
    }
    Ok((1.0 + t) * (1.0 + t) / (2.0 * (1.0 + t * t)))
}
