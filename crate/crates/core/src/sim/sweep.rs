//! Parameter sweeps producing plot-ready curves.

use std::io::Write;

use serde::{Deserialize, Serialize, Serializer};

use super::{run_mc, McReport, Method, SimConfig, SimError};
use crate::alloc::{f_of_t, variance_for_counts, variance_ratio, SdVector};
use crate::bayes::PriorConfig;
use crate::frame::PopulationFrame;
use crate::rng::{Domain, StreamKey};

/// Everything a sweep needs except the swept frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    /// N_1; the other group sizes derive from it.
    pub group_size: u64,
    pub budget: u64,
    pub pilot_fraction: f64,
    pub min_pilot_per_group: u64,
    pub replications: u64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub level: f64,
    pub prior: PriorConfig,
}

impl SweepSettings {
    pub fn new(replications: u64, seed: u64, methods: &[Method]) -> Self {
        SweepSettings {
            group_size: 10_000,
            budget: 1000,
            pilot_fraction: 0.1,
            min_pilot_per_group: 2,
            replications,
            seed,
            methods: methods.to_vec(),
            level: 0.95,
            prior: PriorConfig::default(),
        }
    }

    pub fn config(&self, frame: PopulationFrame, point: u64) -> SimConfig {
        SimConfig {
            frame,
            budget: self.budget,
            pilot_fraction: self.pilot_fraction,
            min_pilot_per_group: self.min_pilot_per_group,
            replications: self.replications,
            seed: self.seed,
            point,
            methods: self.methods.clone(),
            level: self.level,
            prior: self.prior.clone(),
        }
    }
}

/// Row label in sweep output: a design, or the analytic curve alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Method(Method),
    Theory,
}

impl Series {
    pub fn name(self) -> &'static str {
        match self {
            Series::Method(m) => m.name(),
            Series::Theory => "Theory",
        }
    }
}

impl Serialize for Series {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub method: Series,
    pub var_ratio: f64,
    pub ci_reduction: f64,
    /// Jackknife standard error of `var_ratio`.
    pub mc_se: f64,
    pub ci_reduction_se: f64,
    pub theory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of an empty slice");
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn points(x: f64, report: &McReport, theory: impl Fn(Method) -> f64) -> Vec<CurvePoint> {
    report
        .methods
        .iter()
        .map(|m| CurvePoint {
            x,
            method: Series::Method(m.method),
            var_ratio: m.var_ratio,
            ci_reduction: m.ci_reduction,
            mc_se: m.var_ratio_se,
            ci_reduction_se: m.ci_reduction_se,
            theory: Some(theory(m.method)),
        })
        .collect()
}

fn positive(xs: &[f64], what: &str) -> Result<(), SimError> {
    if xs.is_empty() || xs.iter().any(|&x| x.is_nan() || x <= 0.0 || x.is_infinite()) {
        return Err(SimError::InvalidConfig(format!("{what} must be positive and finite")));
    }
    Ok(())
}

fn two_groups(n1: u64, n2: u64, t: f64) -> Result<PopulationFrame, SimError> {
    Ok(PopulationFrame::simulated(&[n1, n2], &[0.0, 0.0], &[1.0, t])?)
}

/// Curve over `t = σ₂/σ₁` for sizes `[N₁, ratio·N₁]`. Point `i` uses stream
/// point `i` on every curve, so curves share random numbers.
fn ratio_curve(ratio: f64, t_grid: &[f64], settings: &SweepSettings) -> Result<Vec<CurvePoint>, SimError> {
    let n1 = settings.group_size;
    let n2 = (ratio * n1 as f64).round().max(1.0) as u64;
    let mut out = Vec::new();
    for (i, &t) in t_grid.iter().enumerate() {
        let frame = two_groups(n1, n2, t)?;
        let theory = variance_ratio(&frame, &SdVector::new(vec![1.0, t])?)?;
        let report = run_mc(&settings.config(frame, i as u64))?;
        out.extend(points(t, &report, |m| if m == Method::UniformIpw { 1.0 } else { theory }));
    }
    Ok(out)
}

/// Equal groups with sds `[1, t]`; the theory column is `f(t)`.
pub fn sweep_t(t_grid: &[f64], settings: &SweepSettings) -> Result<Vec<CurvePoint>, SimError> {
    positive(t_grid, "t values")?;
    let mut pts = ratio_curve(1.0, t_grid, settings)?;
    for p in &mut pts {
        if p.method != Series::Method(Method::UniformIpw) {
            p.theory = Some(f_of_t(p.x)?);
        }
    }
    Ok(pts)
}

/// One curve per `N₂/N₁`.
pub fn sweep_size_ratio(
    ratios: &[f64],
    t_grid: &[f64],
    settings: &SweepSettings,
) -> Result<Vec<Curve>, SimError> {
    positive(ratios, "size ratios")?;
    positive(t_grid, "t values")?;
    ratios
        .iter()
        .map(|&r| {
            Ok(Curve {
                label: format!("ratio_{r}"),
                points: ratio_curve(r, t_grid, settings)?,
            })
        })
        .collect()
}

/// Variance ratio of a two-stage design that knew the sds: a proportional
/// pilot of `p n` followed by unrounded Neyman counts for the rest.
fn ideal_two_stage_ratio(frame: &PopulationFrame, sd: &SdVector, n: f64, p: f64) -> Result<f64, SimError> {
    let big_n = frame.total_size() as f64;
    let scores: Vec<f64> = frame.groups().iter().zip(sd.as_slice()).map(|(g, s)| g.size as f64 * s).collect();
    let total: f64 = scores.iter().sum();
    let prop: Vec<f64> = frame.groups().iter().map(|g| n * g.size as f64 / big_n).collect();
    let counts: Vec<f64> = prop
        .iter()
        .zip(&scores)
        .map(|(&q, &s)| p * q + (1.0 - p) * n * s / total)
        .collect();
    Ok(variance_for_counts(frame, sd, &counts)? / variance_for_counts(frame, sd, &prop)?)
}

/// One curve per `t`, sweeping the pilot fraction. The theory column holds the
/// known-sd two-stage ratio for adaptive methods and `f(t)` for the oracle.
pub fn sweep_p(p_grid: &[f64], t_values: &[f64], settings: &SweepSettings) -> Result<Vec<Curve>, SimError> {
    positive(t_values, "t values")?;
    if p_grid.is_empty() || p_grid.iter().any(|p| !(0.0..1.0).contains(p)) {
        return Err(SimError::InvalidConfig("pilot fractions must lie in [0, 1)".into()));
    }
    let n1 = settings.group_size;
    let mut curves = Vec::new();
    for &t in t_values {
        let mut pts = Vec::new();
        for (i, &p) in p_grid.iter().enumerate() {
            let frame = two_groups(n1, n1, t)?;
            let sd = SdVector::new(vec![1.0, t])?;
            let ideal = ideal_two_stage_ratio(&frame, &sd, settings.budget as f64, p)?;
            let oracle = f_of_t(t)?;
            let mut cfg = settings.config(frame, i as u64);
            cfg.pilot_fraction = p;
            let report = run_mc(&cfg)?;
            pts.extend(points(p, &report, |m| match m {
                Method::UniformIpw => 1.0,
                Method::OracleOptimal => oracle,
                Method::TwoStage | Method::BayesSrw => ideal,
            }));
        }
        curves.push(Curve {
            label: format!("t_{t}"),
            points: pts,
        });
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub ks: Vec<usize>,
    /// σ vectors drawn per k for the analytic median.
    pub draws_per_k: usize,
    /// Leading σ draws per k that also get a Monte Carlo run.
    pub mc_draws_per_k: usize,
    /// Budget is this many units per group.
    pub budget_per_group: u64,
}

impl Default for KSweep {
    fn default() -> Self {
        KSweep {
            ks: (1..=200).collect(),
            draws_per_k: 200,
            mc_draws_per_k: 0,
            budget_per_group: 20,
        }
    }
}

/// σ vectors `[1, 10^{Y_2}, …, 10^{Y_k}]` with `Y ~ Normal(0, 2)`.
pub fn k_sweep_sigmas(seed: u64, k: usize, draw: usize) -> Vec<f64> {
    let mut s = StreamKey::new(seed, Domain::SigmaDraws, k as u64, draw as u64).stream(0, 0);
    std::iter::once(1.0)
        .chain((1..k).map(|_| 10f64.powf(std::f64::consts::SQRT_2 * s.next_normal())))
        .collect()
}

/// Analytic variance ratio of each σ draw at `k` equal groups.
pub fn k_sweep_theory(settings: &SweepSettings, k: usize, draws: usize) -> Result<Vec<f64>, SimError> {
    let frame = PopulationFrame::simulated(&vec![settings.group_size; k], &vec![0.0; k], &vec![1.0; k])?;
    (0..draws)
        .map(|d| Ok(variance_ratio(&frame, &SdVector::new(k_sweep_sigmas(settings.seed, k, d))?)?))
        .collect()
}

/// Median analytic ratio per k as a `Theory` row, followed by median
/// empirical rows when `mc_draws_per_k > 0`.
pub fn sweep_k(grid: &KSweep, settings: &SweepSettings) -> Result<Vec<CurvePoint>, SimError> {
    if grid.ks.is_empty() || grid.ks.contains(&0) || grid.draws_per_k == 0 {
        return Err(SimError::InvalidConfig("k values and draws must be at least 1".into()));
    }
    if grid.mc_draws_per_k > grid.draws_per_k {
        return Err(SimError::InvalidConfig("mc draws cannot exceed draws per k".into()));
    }
    let mut out = Vec::new();
    for &k in &grid.ks {
        let theory = median(&k_sweep_theory(settings, k, grid.draws_per_k)?);
        out.push(CurvePoint {
            x: k as f64,
            method: Series::Theory,
            var_ratio: theory,
            ci_reduction: 1.0 - theory.sqrt(),
            mc_se: 0.0,
            ci_reduction_se: 0.0,
            theory: Some(theory),
        });
        if grid.mc_draws_per_k == 0 {
            continue;
        }
        let mut reports = Vec::new();
        for d in 0..grid.mc_draws_per_k {
            let sd = k_sweep_sigmas(settings.seed, k, d);
            let frame = PopulationFrame::simulated(&vec![settings.group_size; k], &vec![0.0; k], &sd)?;
            let mut cfg = settings.config(frame, ((k as u64) << 20) | d as u64);
            cfg.budget = grid.budget_per_group * k as u64;
            reports.push(run_mc(&cfg)?);
        }
        for (slot, &method) in settings.methods.iter().enumerate() {
            let pick = |f: fn(&super::MethodSummary) -> f64| -> f64 {
                median(&reports.iter().map(|r| f(&r.methods[slot])).collect::<Vec<_>>())
            };
            out.push(CurvePoint {
                x: k as f64,
                method: Series::Method(method),
                var_ratio: pick(|m| m.var_ratio),
                ci_reduction: pick(|m| m.ci_reduction),
                mc_se: pick(|m| m.var_ratio_se),
                ci_reduction_se: pick(|m| m.ci_reduction_se),
                theory: Some(theory),
            });
        }
    }
    Ok(out)
}

/// `x,method,var_ratio,ci_reduction,mc_se,theory`, one row per point.
pub fn write_curve_csv<W: Write>(points: &[CurvePoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "x,method,var_ratio,ci_reduction,mc_se,theory")?;
    for p in points {
        let theory = p.theory.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.x,
            p.method.name(),
            p.var_ratio,
            p.ci_reduction,
            p.mc_se,
            theory
        )?;
    }
    Ok(())
}
