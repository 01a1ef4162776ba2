//! Grid EM for the factorized prior `g(μ) h(σ)`.

use super::{log_kernel, BayesError, PriorConfig, PriorModel};
use crate::estimate::GroupSummary;
use crate::stats::sample_variance;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorFit {
    pub prior: PriorModel,
    /// Marginal log-likelihood of every evaluated iterate, up to a
    /// data-only constant.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

/// Support grids spanning the observed summaries.
pub(crate) fn grids(
    cfg: &PriorConfig,
    stats: &[GroupSummary],
    sd_floor: f64,
) -> Result<(Vec<f64>, Vec<f64>), BayesError> {
    let means: Vec<f64> = stats.iter().filter_map(|s| s.mean).collect();
    let sds: Vec<f64> = stats.iter().filter_map(|s| s.sd).collect();
    if sds.is_empty() {
        return Err(BayesError::NoGroupWithSd);
    }
    let min_count = stats.iter().filter(|s| s.count > 0).map(|s| s.count).min().unwrap_or(1);
    let max_sd = sds.iter().cloned().fold(0.0f64, f64::max);
    let min_sd = sds.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_abs_mean = means.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mean_sd = sample_variance(&means).map_or(0.0, f64::sqrt);
    let spread = mean_sd
        .max(max_sd / (min_count as f64).sqrt())
        .max(sd_floor)
        .max(1e-12 * (1.0 + max_abs_mean));
    let lo_mu = means.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * spread;
    let hi_mu = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0 * spread;

    let positive_min = sds.iter().cloned().filter(|&s| s > 0.0).fold(f64::INFINITY, f64::min);
    let mut base = sd_floor.max(min_sd);
    if base <= 0.0 {
        base = if positive_min.is_finite() { positive_min } else { 1e-12 };
    }
    let lo_sigma = base / 4.0;
    let mut hi_sigma = 4.0 * max_sd;
    if hi_sigma <= lo_sigma {
        hi_sigma = 16.0 * lo_sigma;
    }
    Ok((
        linspace(lo_mu, hi_mu, cfg.mu_points),
        logspace(lo_sigma, hi_sigma, cfg.sigma_points),
    ))
}

/// Per-group likelihood on the grid, scaled so each group's maximum is 1.
pub(crate) struct LikelihoodTable {
    pub a: usize,
    pub b: usize,
    pub cells: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

impl LikelihoodTable {
    pub fn new(stats: &[GroupSummary], mu: &[f64], sigma: &[f64]) -> Self {
        let (a, b) = (mu.len(), sigma.len());
        let mut cells = Vec::new();
        let mut offsets = Vec::new();
        for s in stats.iter().filter(|s| s.count > 0) {
            let mut row = Vec::with_capacity(a * b);
            for &m in mu {
                for &sg in sigma {
                    row.push(log_kernel(s, m, sg));
                }
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v = (*v - max).exp());
            cells.push(row);
            offsets.push(max);
        }
        LikelihoodTable { a, b, cells, offsets }
    }
}

/// Fits `g` and `h` by EM under the independence factorization.
///
/// The M-step is exact: the expected complete-data log-likelihood separates
/// into a `g` part and an `h` part, each maximized by the normalized
/// responsibility margins. The likelihood therefore never decreases.
pub fn fit_prior(
    stats: &[GroupSummary],
    cfg: &PriorConfig,
    sd_floor: f64,
) -> Result<PriorFit, BayesError> {
    cfg.validate()?;
    let (mu_grid, sigma_grid) = grids(cfg, stats, sd_floor)?;
    let table = LikelihoodTable::new(stats, &mu_grid, &sigma_grid);
    let (a, b) = (table.a, table.b);
    let k = table.cells.len() as f64;
    let offset: f64 = table.offsets.iter().sum();

    let mut g = vec![1.0 / a as f64; a];
    let mut h = vec![1.0 / b as f64; b];
    let mut g_next = vec![0.0; a];
    let mut h_next = vec![0.0; b];
    let mut v = vec![0.0; a];
    let mut u = vec![0.0; b];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    // One sweep evaluates the log-likelihood at (g, h) and accumulates the
    // responsibility margins for the next iterate.
    let mut sweep = |g: &[f64], h: &[f64], g_next: &mut [f64], h_next: &mut [f64]| -> f64 {
        g_next.iter_mut().for_each(|x| *x = 0.0);
        h_next.iter_mut().for_each(|x| *x = 0.0);
        let mut ll = offset;
        for cell in &table.cells {
            u.iter_mut().for_each(|x| *x = 0.0);
            for ai in 0..a {
                let row = &cell[ai * b..(ai + 1) * b];
                let ga = g[ai];
                let mut acc = 0.0;
                for ((&l, &hb), ub) in row.iter().zip(h).zip(u.iter_mut()) {
                    acc += l * hb;
                    *ub += l * ga;
                }
                v[ai] = acc;
            }
            let li = g.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>().max(f64::MIN_POSITIVE);
            ll += li.ln();
            for ai in 0..a {
                g_next[ai] += g[ai] * v[ai] / li;
            }
            for bi in 0..b {
                h_next[bi] += h[bi] * u[bi] / li;
            }
        }
        ll
    };

    let mut ll_prev = sweep(&g, &h, &mut g_next, &mut h_next);
    trace.push(ll_prev);
    while iterations < cfg.max_iter {
        iterations += 1;
        normalize_into(&mut g, &g_next, k);
        normalize_into(&mut h, &h_next, k);
        let ll = sweep(&g, &h, &mut g_next, &mut h_next);
        trace.push(ll);
        if (ll - ll_prev).abs() < cfg.rel_tol * ll_prev.abs().max(1e-300) {
            converged = true;
            break;
        }
        ll_prev = ll;
    }

    let prior = PriorModel::new(mu_grid, g, sigma_grid, h)?;
    Ok(PriorFit {
        prior,
        log_likelihood: trace,
        iterations,
        converged,
    })
}

fn normalize_into(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = s / k;
    }
    // Re-normalize to absorb rounding so weights sum to one.
    let total: f64 = dst.iter().sum();
    dst.iter_mut().for_each(|d| *d /= total);
}
