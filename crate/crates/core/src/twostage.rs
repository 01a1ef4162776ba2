//! Two-stage sampling and re-weighting.
//!
//! A pilot spends `round(n p)` units proportionally to estimate per-group sds,
//! the remaining budget is placed by Neyman allocation on those estimates, and
//! the final IPW estimate pools both stages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc::{
    allocate_remaining, capped_weights, enforce_minimum, largest_remainder, proportional_allocation,
    AllocError, AllocationMethod, AllocationPlan, SdVector,
};
use crate::estimate::{estimate_with_ci, EstimateError, EstimateResult, SdSource};
use crate::frame::{FrameError, ObservationSet, PopulationFrame, Stage};
use crate::sampler::{NormalFrameSampler, UnitSampler};
use crate::stats::sample_variance;

#[derive(Debug, Error)]
pub enum TwoStageError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("pilot budget {pilot} cannot give {per_group} units to each of {groups} groups")]
    PilotTooSmall {
        pilot: u64,
        per_group: u64,
        groups: usize,
    },
    #[error("pilot group {group} has {count} observations; at least 2 are needed")]
    PilotGroupTooSmall { group: usize, count: u64 },
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

impl TwoStageError {
    /// True for errors caused by an unworkable budget or pilot size.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            TwoStageError::PilotTooSmall { .. }
                | TwoStageError::Alloc(AllocError::BudgetExceedsPopulation { .. })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageConfig {
    pub budget: u64,
    pub pilot_fraction: f64,
    pub min_pilot_per_group: u64,
    /// `None` picks `1e-9 × (max |pilot value| + 1)`.
    pub sd_floor: Option<f64>,
    /// Pool pilot observations into the final estimate.
    pub reuse_pilot: bool,
    pub level: f64,
}

impl TwoStageConfig {
    pub fn new(budget: u64, pilot_fraction: f64) -> Self {
        TwoStageConfig {
            budget,
            pilot_fraction,
            min_pilot_per_group: 2,
            sd_floor: None,
            reuse_pilot: true,
            level: 0.95,
        }
    }

    pub fn validate(&self) -> Result<(), TwoStageError> {
        let bad = |m: &str| Err(TwoStageError::InvalidConfig(m.to_string()));
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if !(0.0..1.0).contains(&self.pilot_fraction) {
            return bad("pilot fraction must lie in [0, 1)");
        }
        if self.min_pilot_per_group < 2 {
            return bad("min_pilot_per_group must be at least 2");
        }
        if let Some(f) = self.sd_floor {
            if !f.is_finite() || f < 0.0 {
                return bad("sd floor must be finite and nonnegative");
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn pilot_budget(&self) -> u64 {
        (self.budget as f64 * self.pilot_fraction).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageTrace {
    pub stage1_plan: AllocationPlan,
    /// Sds driving the stage-2 plan; absent when the pilot was skipped.
    pub sd_estimates: Option<SdVector>,
    pub sd_floor: f64,
    pub stage2_plan: AllocationPlan,
    pub combined_counts: Vec<u64>,
    pub result: EstimateResult,
}

pub(crate) struct Pilot {
    pub plan: AllocationPlan,
    pub obs: ObservationSet,
    pub sd_floor: f64,
}

/// Per-group pilot sd with the n − 1 denominator, raised to `sd_floor`.
pub fn sd_estimate_stage1(obs: &ObservationSet, sd_floor: f64) -> Result<SdVector, TwoStageError> {
    let mut sds = Vec::with_capacity(obs.num_groups());
    for group in 0..obs.num_groups() {
        let values: Vec<f64> = obs.values(group).collect();
        let var = sample_variance(&values).ok_or(TwoStageError::PilotGroupTooSmall {
            group,
            count: values.len() as u64,
        })?;
        sds.push(var.sqrt().max(sd_floor));
    }
    Ok(SdVector::new(sds)?)
}

pub(crate) fn check_budget(frame: &PopulationFrame, cfg: &TwoStageConfig) -> Result<(), TwoStageError> {
    cfg.validate()?;
    if cfg.budget > frame.total_size() {
        return Err(AllocError::BudgetExceedsPopulation {
            budget: cfg.budget,
            available: frame.total_size(),
        }
        .into());
    }
    Ok(())
}

/// Stage 1. Returns `None` when the pilot fraction is zero.
pub(crate) fn run_pilot<S: UnitSampler + ?Sized>(
    frame: &PopulationFrame,
    sampler: &mut S,
    cfg: &TwoStageConfig,
) -> Result<Option<Pilot>, TwoStageError> {
    check_budget(frame, cfg)?;
    if cfg.pilot_fraction == 0.0 {
        return Ok(None);
    }
    let pilot = cfg.pilot_budget();
    let k = frame.len();
    let too_small = TwoStageError::PilotTooSmall {
        pilot,
        per_group: cfg.min_pilot_per_group,
        groups: k,
    };
    if pilot < k as u64 * cfg.min_pilot_per_group {
        return Err(too_small);
    }
    let sizes = frame.sizes();
    let scores: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let mut counts = largest_remainder(&capped_weights(&sizes, &scores, pilot)?, &sizes);
    enforce_minimum(&mut counts, &sizes, cfg.min_pilot_per_group).ok_or(too_small)?;
    let plan = AllocationPlan::checked(&sizes, counts, AllocationMethod::Proportional)?;

    let mut obs = ObservationSet::new(frame);
    for (i, &c) in plan.counts().iter().enumerate() {
        obs.extend(i, Stage::Pilot, sampler.draw(i, 0, c))?;
    }
    let sd_floor = cfg.sd_floor.unwrap_or_else(|| {
        let max_abs = (0..k)
            .flat_map(|i| obs.values(i))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        1e-9 * (max_abs + 1.0)
    });
    Ok(Some(Pilot { plan, obs, sd_floor }))
}

pub(crate) struct MainStage {
    pub trace: TwoStageTrace,
    pub obs: ObservationSet,
}

/// Stage 2 on top of an optional pilot, using `sd` for the Neyman weights.
pub(crate) fn run_main<S: UnitSampler + ?Sized>(
    frame: &PopulationFrame,
    sampler: &mut S,
    cfg: &TwoStageConfig,
    pilot: Option<Pilot>,
    sd: Option<SdVector>,
) -> Result<MainStage, TwoStageError> {
    let k = frame.len();
    let (stage1_plan, mut obs, sd_floor) = match pilot {
        Some(p) => (p.plan, p.obs, p.sd_floor),
        None => (
            AllocationPlan::empty(k, AllocationMethod::Proportional),
            ObservationSet::new(frame),
            cfg.sd_floor.unwrap_or(0.0),
        ),
    };
    let spent = stage1_plan.budget();
    let remaining = cfg.budget - spent;
    let floor = if cfg.reuse_pilot && spent > 0 { 0 } else { 1 };

    let stage2_plan = if spent == 0 {
        proportional_allocation(frame, cfg.budget)?
    } else {
        let informative = sd
            .as_ref()
            .filter(|s| s.as_slice().iter().any(|&v| v > sd_floor));
        allocate_remaining(frame, stage1_plan.counts(), informative, remaining, floor)?
    };

    let mut main = ObservationSet::new(frame);
    for (i, (&c, &start)) in stage2_plan.counts().iter().zip(stage1_plan.counts()).enumerate() {
        let values = sampler.draw(i, start, c);
        obs.extend(i, Stage::Main, values.iter().copied())?;
        main.extend(i, Stage::Main, values)?;
    }
    let combined_counts: Vec<u64> = stage1_plan
        .counts()
        .iter()
        .zip(stage2_plan.counts())
        .map(|(a, b)| a + b)
        .collect();
    let (est_obs, est_counts) = if cfg.reuse_pilot {
        (&obs, combined_counts.clone())
    } else {
        (&main, stage2_plan.counts().to_vec())
    };
    let result = estimate_with_ci(est_obs, frame, &est_counts, &SdSource::Sample, cfg.level)?;
    Ok(MainStage {
        trace: TwoStageTrace {
            stage1_plan,
            sd_estimates: sd,
            sd_floor,
            stage2_plan,
            combined_counts,
            result,
        },
        obs,
    })
}

pub fn run_two_stage<S: UnitSampler + ?Sized>(
    frame: &PopulationFrame,
    sampler: &mut S,
    cfg: &TwoStageConfig,
) -> Result<TwoStageTrace, TwoStageError> {
    let pilot = run_pilot(frame, sampler, cfg)?;
    let sd = match &pilot {
        Some(p) => Some(sd_estimate_stage1(&p.obs, p.sd_floor)?),
        None => None,
    };
    Ok(run_main(frame, sampler, cfg, pilot, sd)?.trace)
}

/// Runs against normal draws from a fully specified frame.
pub fn run_two_stage_seeded(
    frame: &PopulationFrame,
    cfg: &TwoStageConfig,
    seed: u64,
) -> Result<TwoStageTrace, TwoStageError> {
    let mut sampler = NormalFrameSampler::seeded(frame, seed)?;
    run_two_stage(frame, &mut sampler, cfg)
}
