//! Variance-minimizing allocation of a sampling budget across groups.
//!
//! The crate covers the pieces of a stratified design: proportional and
//! Neyman allocation with integer rounding ([`alloc`]), the inverse
//! probability weighted mean ([`estimate`]), a pilot-then-optimal design
//! ([`twostage`]), its empirical-Bayes variant ([`bayes`]) and a seeded Monte
//! Carlo harness for comparing them ([`sim`]).

pub mod alloc;
pub mod bayes;
pub mod estimate;
pub mod frame;
pub mod rng;
pub mod sampler;
pub mod sim;
pub mod stats;
pub mod twostage;

pub use alloc::{
    analytic_variance, f_of_t, optimal_allocation, proportional_allocation, round_counts,
    variance_lower_bound, variance_ratio, AllocError, AllocationMethod, AllocationPlan, SdVector,
};
pub use bayes::{
    fit_prior, posterior_group, run_bayes_srw, BayesError, BayesSrwOutcome, GroupPosterior,
    PriorConfig, PriorFit, PriorModel,
};
pub use estimate::{
    estimate_with_ci, group_stats, ipw_mean, EstimateError, EstimateResult, GroupSummary, SdSource,
};
pub use frame::{
    load_frame, load_observations, FrameError, GroupSpec, GroupTruth, ObservationSet,
    PopulationFrame, Stage,
};
pub use sampler::{draw_group, NormalFrameSampler, UnitSampler};
pub use sim::{run_mc, CurvePoint, McReport, Method, SimConfig, SimError};
pub use twostage::{
    run_two_stage, run_two_stage_seeded, sd_estimate_stage1, TwoStageConfig, TwoStageError,
    TwoStageTrace,
};
