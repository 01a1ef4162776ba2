//! Empirical-Bayes two-stage design (BayesSRW).
//!
//! Stage-1 summaries fit a discrete prior `p(μ, σ) = g(μ) h(σ)` on a product
//! grid. Posterior-mean sds from that prior drive the stage-2 Neyman plan; the
//! prior is then refit on the pooled data and the population mean is formed
//! from per-group posterior means weighted by `N_i / N`.
//!
//! Both the fit and the posteriors use the normal-model likelihood of a
//! group's summary `(n, x̄, s)`: `x̄ ~ N(μ, σ²/n)` and
//! `(n−1) s²/σ² ~ χ²_{n−1}`, which up to data-only constants is
//! `σ^{-n} exp(-(n (x̄−μ)² + (n−1) s²) / (2σ²))`.

mod em;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc::SdVector;
use crate::estimate::{group_stats, GroupSummary};
use crate::frame::{PopulationFrame, Stage};
use crate::sampler::{NormalFrameSampler, UnitSampler};
use crate::twostage::{run_main, run_pilot, TwoStageConfig, TwoStageError, TwoStageTrace};

pub use em::{fit_prior, PriorFit};

#[derive(Debug, Error)]
pub enum BayesError {
    #[error("no group has the two observations needed for a sample sd")]
    NoGroupWithSd,
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error(transparent)]
    TwoStage(#[from] TwoStageError),
}

impl BayesError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, BayesError::TwoStage(e) if e.is_infeasible())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub mu_points: usize,
    pub sigma_points: usize,
    pub max_iter: usize,
    /// Stop once the relative change in log-likelihood falls below this.
    pub rel_tol: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            mu_points: 41,
            sigma_points: 41,
            max_iter: 500,
            rel_tol: 1e-8,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), BayesError> {
        if self.mu_points < 1 || self.sigma_points < 1 {
            return Err(BayesError::InvalidPrior("grids need at least one point".into()));
        }
        if self.rel_tol.is_nan() || self.rel_tol < 0.0 {
            return Err(BayesError::InvalidPrior("tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Discrete factorized prior on `mu_grid × sigma_grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    mu_grid: Vec<f64>,
    mu_weights: Vec<f64>,
    sigma_grid: Vec<f64>,
    sigma_weights: Vec<f64>,
}

impl PriorModel {
    pub fn new(
        mu_grid: Vec<f64>,
        mu_weights: Vec<f64>,
        sigma_grid: Vec<f64>,
        sigma_weights: Vec<f64>,
    ) -> Result<Self, BayesError> {
        let bad = |m: &str| Err(BayesError::InvalidPrior(m.to_string()));
        if mu_grid.is_empty() || mu_grid.len() != mu_weights.len() {
            return bad("mu grid and weights must be nonempty and of equal length");
        }
        if sigma_grid.is_empty() || sigma_grid.len() != sigma_weights.len() {
            return bad("sigma grid and weights must be nonempty and of equal length");
        }
        if mu_grid.iter().any(|m| !m.is_finite()) || mu_grid.windows(2).any(|w| w[1] < w[0]) {
            return bad("mu grid must be ascending");
        }
        if sigma_grid.iter().any(|s| !s.is_finite()) || sigma_grid[0] <= 0.0 || sigma_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("sigma grid must be positive and strictly increasing");
        }
        for w in [&mu_weights, &sigma_weights] {
            if w.iter().any(|&x| x.is_nan() || x < 0.0) {
                return bad("weights must be nonnegative");
            }
            if (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return bad("weights must sum to one");
            }
        }
        Ok(PriorModel {
            mu_grid,
            mu_weights,
            sigma_grid,
            sigma_weights,
        })
    }

    /// All mass on the single point `(mu, sigma)`.
    pub fn point_mass(mu: f64, sigma: f64) -> Result<Self, BayesError> {
        Self::new(vec![mu], vec![1.0], vec![sigma], vec![1.0])
    }

    pub fn mu_grid(&self) -> &[f64] {
        &self.mu_grid
    }

    pub fn mu_weights(&self) -> &[f64] {
        &self.mu_weights
    }

    pub fn sigma_grid(&self) -> &[f64] {
        &self.sigma_grid
    }

    pub fn sigma_weights(&self) -> &[f64] {
        &self.sigma_weights
    }

    pub fn mean_sigma(&self) -> f64 {
        self.sigma_grid.iter().zip(&self.sigma_weights).map(|(s, w)| s * w).sum()
    }

    pub fn mu_step(&self) -> f64 {
        match self.mu_grid.as_slice() {
            [a, b, ..] => b - a,
            _ => 0.0,
        }
    }
}

/// Log-likelihood of a group summary at `(mu, sigma)`, dropping terms that
/// depend only on the data.
pub(crate) fn log_kernel(s: &GroupSummary, mu: f64, sigma: f64) -> f64 {
    let Some(mean) = s.mean else { return 0.0 };
    let c = s.count as f64;
    let d = mean - mu;
    match s.sd {
        Some(sd) if s.count >= 2 => {
            -c * sigma.ln() - (c * d * d + (c - 1.0) * sd * sd) / (2.0 * sigma * sigma)
        }
        _ => -sigma.ln() - d * d / (2.0 * sigma * sigma),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPosterior {
    /// Row-major over `mu_grid × sigma_grid`.
    pub weights: Vec<f64>,
    pub map_mu: f64,
    pub map_sigma: f64,
    pub post_mean_mu: f64,
    pub post_mean_sigma: f64,
}

/// Posterior of one group on the prior's grid.
pub fn posterior_group(stats: &GroupSummary, prior: &PriorModel) -> GroupPosterior {
    let (mu, sigma) = (prior.mu_grid(), prior.sigma_grid());
    let b = sigma.len();
    let mut logw = Vec::with_capacity(mu.len() * b);
    for (&m, &gm) in mu.iter().zip(prior.mu_weights()) {
        for (&s, &hs) in sigma.iter().zip(prior.sigma_weights()) {
            logw.push(if gm > 0.0 && hs > 0.0 {
                gm.ln() + hs.ln() + log_kernel(stats, m, s)
            } else {
                f64::NEG_INFINITY
            });
        }
    }
    let mut best = 0;
    for (i, &x) in logw.iter().enumerate() {
        if x > logw[best] {
            best = i;
        }
    }
    let top = logw[best];
    let mut weights: Vec<f64> = logw.iter().map(|&x| (x - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let (mut pm, mut ps) = (0.0, 0.0);
    for (i, &w) in weights.iter().enumerate() {
        pm += w * mu[i / b];
        ps += w * sigma[i % b];
    }
    GroupPosterior {
        weights,
        map_mu: mu[best / b],
        map_sigma: sigma[best % b],
        post_mean_mu: pm,
        post_mean_sigma: ps,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesSrwOutcome {
    /// Stage plans and the plain IPW estimate; `sd_estimates` holds the
    /// shrunken sds used for stage 2.
    pub trace: TwoStageTrace,
    pub pilot_sd: Option<Vec<Option<f64>>>,
    pub pilot_prior: Option<PriorModel>,
    pub prior: PriorModel,
    pub posteriors: Vec<GroupPosterior>,
    pub mu_hat_bayes: f64,
    pub mu_hat_ipw: f64,
}

/// Runs the full design: pilot, prior fit, shrunken Neyman stage 2, refit,
/// and the posterior-mean population estimate.
pub fn run_bayes_srw<S: UnitSampler + ?Sized>(
    frame: &PopulationFrame,
    sampler: &mut S,
    cfg: &TwoStageConfig,
    prior_cfg: &PriorConfig,
) -> Result<BayesSrwOutcome, BayesError> {
    prior_cfg.validate()?;
    let pilot = run_pilot(frame, sampler, cfg)?;

    let (pilot_sd, pilot_prior, shrunk) = match &pilot {
        Some(p) => {
            let stats = group_stats(&p.obs);
            let fit = fit_prior(&stats, prior_cfg, p.sd_floor)?;
            let shrunk: Vec<f64> = stats
                .iter()
                .map(|s| posterior_group(s, &fit.prior).post_mean_sigma.max(p.sd_floor))
                .collect();
            (
                Some(stats.iter().map(|s| s.sd).collect()),
                Some(fit.prior),
                Some(SdVector::new(shrunk).map_err(TwoStageError::from)?),
            )
        }
        None => (None, None, None),
    };

    let main = run_main(frame, sampler, cfg, pilot, shrunk)?;
    let pooled = if cfg.reuse_pilot {
        main.obs.clone()
    } else {
        main.obs.stage(Stage::Main)
    };
    let stats = group_stats(&pooled);
    let fit = fit_prior(&stats, prior_cfg, main.trace.sd_floor)?;
    let posteriors: Vec<GroupPosterior> = stats.iter().map(|s| posterior_group(s, &fit.prior)).collect();
    let mu_hat_bayes = frame
        .groups()
        .iter()
        .zip(&posteriors)
        .map(|(g, p)| g.size as f64 * p.post_mean_mu)
        .sum::<f64>()
        / frame.total_size() as f64;
    let mu_hat_ipw = main.trace.result.mu_hat;
    Ok(BayesSrwOutcome {
        trace: main.trace,
        pilot_sd,
        pilot_prior,
        prior: fit.prior,
        posteriors,
        mu_hat_bayes,
        mu_hat_ipw,
    })
}

pub fn run_bayes_srw_seeded(
    frame: &PopulationFrame,
    cfg: &TwoStageConfig,
    prior_cfg: &PriorConfig,
    seed: u64,
) -> Result<BayesSrwOutcome, BayesError> {
    let mut sampler = NormalFrameSampler::seeded(frame, seed).map_err(TwoStageError::from)?;
    run_bayes_srw(frame, &mut sampler, cfg, prior_cfg)
}
