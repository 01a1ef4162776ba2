//! Budget allocation across groups.
//!
//! Proportional allocation gives each group `n N_i / N` units; optimal
//! (Neyman) allocation gives `n N_i σ_i / Σ_j N_j σ_j`. Both are rounded to
//! integers by largest remainder, capped at the group size, and floored at one
//! unit per group whenever the budget allows it.

mod rounding;
mod variance;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::PopulationFrame;

pub use rounding::{enforce_minimum, largest_remainder};
pub use variance::{
    analytic_variance, f_of_t, variance_for_counts, variance_lower_bound, variance_ratio,
};

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("budget {budget} exceeds the {available} available units")]
    BudgetExceedsPopulation { budget: u64, available: u64 },
    #[error("all standard deviations are zero; fall back to proportional allocation")]
    AllZeroSd,
    #[error("sd vector has {found} entries, frame has {expected} groups")]
    LengthMismatch { expected: usize, found: usize },
    #[error("sd entry {index} is {value}; sds must be finite and nonnegative")]
    InvalidSd { index: usize, value: f64 },
    #[error("group {group} has positive sd but zero allocated units")]
    UnsampledGroup { group: usize },
    #[error("count {count} for group {group} exceeds its size {size}")]
    CountExceedsSize { group: usize, count: u64, size: u64 },
    #[error("t must be positive, found {0}")]
    NonpositiveRatio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllocationMethod {
    Proportional,
    Optimal,
    Custom,
}

impl fmt::Display for AllocationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AllocationMethod::Proportional => "Proportional",
            AllocationMethod::Optimal => "Optimal",
            AllocationMethod::Custom => "Custom",
        })
    }
}

/// Integer per-group sample counts summing to the budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    counts: Vec<u64>,
    budget: u64,
    method: AllocationMethod,
}

impl AllocationPlan {
    /// Wraps caller-provided counts after checking them against the frame.
    pub fn custom(frame: &PopulationFrame, counts: Vec<u64>) -> Result<Self, AllocError> {
        Self::checked(frame.sizes().as_slice(), counts, AllocationMethod::Custom)
    }

    /// An all-zero plan, used for a skipped pilot stage.
    pub fn empty(k: usize, method: AllocationMethod) -> Self {
        AllocationPlan {
            counts: vec![0; k],
            budget: 0,
            method,
        }
    }

    pub(crate) fn checked(
        caps: &[u64],
        counts: Vec<u64>,
        method: AllocationMethod,
    ) -> Result<Self, AllocError> {
        if counts.len() != caps.len() {
            return Err(AllocError::LengthMismatch {
                expected: caps.len(),
                found: counts.len(),
            });
        }
        for (group, (&count, &size)) in counts.iter().zip(caps).enumerate() {
            if count > size {
                return Err(AllocError::CountExceedsSize { group, count, size });
            }
        }
        let budget = counts.iter().sum();
        Ok(AllocationPlan {
            counts,
            budget,
            method,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn method(&self) -> AllocationMethod {
        self.method
    }

    /// Writes `group,n_i` rows under a header.
    pub fn write_csv<W: Write>(&self, frame: &PopulationFrame, mut out: W) -> std::io::Result<()> {
        writeln!(out, "group,n_i")?;
        for (g, n) in frame.groups().iter().zip(&self.counts) {
            writeln!(out, "{},{}", g.id, n)?;
        }
        Ok(())
    }

    pub fn document(&self, frame: &PopulationFrame) -> PlanDocument {
        PlanDocument {
            method: self.method,
            budget: self.budget,
            groups: frame.groups().iter().map(|g| g.id.clone()).collect(),
            counts: self.counts.clone(),
        }
    }
}

/// JSON form of a plan, labelled with group ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub method: AllocationMethod,
    pub budget: u64,
    pub groups: Vec<String>,
    pub counts: Vec<u64>,
}

/// Per-group standard deviations (true or estimated), in frame order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SdVector(Vec<f64>);

impl SdVector {
    pub fn new(values: Vec<f64>) -> Result<Self, AllocError> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(AllocError::InvalidSd { index, value });
            }
        }
        Ok(SdVector(values))
    }

    pub fn for_frame(frame: &PopulationFrame, values: Vec<f64>) -> Result<Self, AllocError> {
        let sd = Self::new(values)?;
        sd.check_len(frame.len())?;
        Ok(sd)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn all_zero(&self) -> bool {
        self.0.iter().all(|&s| s == 0.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn check_len(&self, k: usize) -> Result<(), AllocError> {
        if self.0.len() != k {
            return Err(AllocError::LengthMismatch {
                expected: k,
                found: self.0.len(),
            });
        }
        Ok(())
    }
}

/// Real-valued allocation proportional to `scores`, capped at `caps`.
///
/// Groups whose share exceeds their cap are pinned there and the excess is
/// spread over the rest in proportion to their scores, repeating until no
/// share exceeds its cap. If only zero-score groups remain uncapped, the rest
/// is spread over them in proportion to capacity.
pub fn capped_weights(caps: &[u64], scores: &[f64], n: u64) -> Result<Vec<f64>, AllocError> {
    let available: u64 = caps.iter().sum();
    if n > available {
        return Err(AllocError::BudgetExceedsPopulation {
            budget: n,
            available,
        });
    }
    let k = caps.len();
    let mut pinned = vec![false; k];
    let mut w = vec![0.0; k];
    loop {
        let pinned_total: u64 = (0..k).filter(|&i| pinned[i]).map(|i| caps[i]).sum();
        let remaining = (n - pinned_total) as f64;
        let score_total: f64 = (0..k).filter(|&i| !pinned[i]).map(|i| scores[i]).sum();
        if score_total <= 0.0 {
            let cap_total: u64 = (0..k).filter(|&i| !pinned[i]).map(|i| caps[i]).sum();
            for i in (0..k).filter(|&i| !pinned[i]) {
                w[i] = if cap_total == 0 {
                    0.0
                } else {
                    remaining * caps[i] as f64 / cap_total as f64
                };
            }
            break;
        }
        let mut grew = false;
        for i in 0..k {
            if pinned[i] {
                w[i] = caps[i] as f64;
                continue;
            }
            w[i] = remaining * scores[i] / score_total;
        }
        for i in 0..k {
            if !pinned[i] && w[i] > caps[i] as f64 {
                pinned[i] = true;
                w[i] = caps[i] as f64;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    Ok(w)
}

/// Largest-remainder rounding of real weights against the frame's sizes.
pub fn round_counts(weights: &[f64], frame: &PopulationFrame) -> Vec<u64> {
    largest_remainder(weights, &frame.sizes())
}

fn check_budget(frame: &PopulationFrame, n: u64) -> Result<(), AllocError> {
    if n == 0 {
        return Err(AllocError::ZeroBudget);
    }
    if n > frame.total_size() {
        return Err(AllocError::BudgetExceedsPopulation {
            budget: n,
            available: frame.total_size(),
        });
    }
    Ok(())
}

/// Rounds, then guarantees one unit per group when `n >= k`.
fn finish(
    caps: &[u64],
    weights: &[f64],
    min_per_group: u64,
    method: AllocationMethod,
) -> Result<AllocationPlan, AllocError> {
    let mut counts = largest_remainder(weights, caps);
    let n: u64 = counts.iter().sum();
    if min_per_group > 0 && n >= caps.len() as u64 * min_per_group {
        enforce_minimum(&mut counts, caps, min_per_group)
            .expect("budget covers the per-group floor");
    }
    AllocationPlan::checked(caps, counts, method)
}

pub fn proportional_allocation(
    frame: &PopulationFrame,
    n: u64,
) -> Result<AllocationPlan, AllocError> {
    check_budget(frame, n)?;
    let caps = frame.sizes();
    let scores: Vec<f64> = caps.iter().map(|&s| s as f64).collect();
    let w = capped_weights(&caps, &scores, n)?;
    finish(&caps, &w, 1, AllocationMethod::Proportional)
}

/// Neyman allocation. Reads only group sizes and sds, never means.
pub fn optimal_allocation(
    frame: &PopulationFrame,
    sd: &SdVector,
    n: u64,
) -> Result<AllocationPlan, AllocError> {
    sd.check_len(frame.len())?;
    check_budget(frame, n)?;
    if sd.all_zero() {
        return Err(AllocError::AllZeroSd);
    }
    let caps = frame.sizes();
    let w = capped_weights(&caps, &neyman_scores(&caps, sd.as_slice()), n)?;
    finish(&caps, &w, 1, AllocationMethod::Optimal)
}

/// Unrounded, uncapped optimal counts `n N_i σ_i / Σ N_j σ_j`.
pub fn optimal_weights(frame: &PopulationFrame, sd: &SdVector, n: f64) -> Result<Vec<f64>, AllocError> {
    sd.check_len(frame.len())?;
    if sd.all_zero() {
        return Err(AllocError::AllZeroSd);
    }
    let scores = neyman_scores(&frame.sizes(), sd.as_slice());
    let total: f64 = scores.iter().sum();
    Ok(scores.iter().map(|s| n * s / total).collect())
}

pub(crate) fn neyman_scores(sizes: &[u64], sd: &[f64]) -> Vec<f64> {
    sizes.iter().zip(sd).map(|(&n, &s)| n as f64 * s).collect()
}

/// Places `n` units on top of `already` sampled units, capping each group at
/// its remaining capacity. `scores` of `None` means proportional to size.
pub(crate) fn allocate_remaining(
    frame: &PopulationFrame,
    already: &[u64],
    sd: Option<&SdVector>,
    n: u64,
    min_per_group: u64,
) -> Result<AllocationPlan, AllocError> {
    let sizes = frame.sizes();
    let caps: Vec<u64> = sizes.iter().zip(already).map(|(&s, &a)| s - a).collect();
    if n == 0 {
        return AllocationPlan::checked(
            &caps,
            vec![0; caps.len()],
            if sd.is_some() {
                AllocationMethod::Optimal
            } else {
                AllocationMethod::Proportional
            },
        );
    }
    let (scores, method) = match sd {
        Some(sd) => (neyman_scores(&sizes, sd.as_slice()), AllocationMethod::Optimal),
        None => (
            sizes.iter().map(|&s| s as f64).collect(),
            AllocationMethod::Proportional,
        ),
    };
    let w = capped_weights(&caps, &scores, n)?;
    finish(&caps, &w, min_per_group, method)
}
