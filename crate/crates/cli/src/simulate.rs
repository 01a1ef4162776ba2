use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use srw_core::sim::{
    sweep_k, sweep_p, sweep_size_ratio, sweep_t, write_curve_csv, CurvePoint, KSweep, Method,
    SweepSettings,
};

use crate::error::CliError;
use crate::output::{emit_all, json, Output};
use crate::{announce, parse_list};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    /// σ₂/σ₁ on two equal groups.
    T,
    /// σ₂/σ₁ for several N₂/N₁.
    SizeRatio,
    /// Number of groups with random σ ratios.
    K,
    /// Pilot fraction for several σ₂/σ₁.
    P,
}

impl Sweep {
    fn stem(self) -> &'static str {
        match self {
            Sweep::T => "sweep_t",
            Sweep::SizeRatio => "sweep_size_ratio",
            Sweep::K => "sweep_k",
            Sweep::P => "sweep_p",
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Which experiment to run.
    #[arg(long, value_enum)]
    sweep: Sweep,
    /// Master seed; every replication stream derives from it.
    #[arg(long)]
    seed: u64,
    /// Replications per swept point.
    #[arg(long, default_value_t = 1000)]
    reps: u64,
    /// Total budget per replication (the k sweep uses --n-per-group instead).
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Pilot fraction; for the p sweep, a comma-separated grid
    /// [default: 0.1, or 0,0.02,0.05,0.1,0.25,0.5 for the p sweep].
    #[arg(long)]
    p: Option<String>,
    /// Comma-separated σ₂/σ₁ values
    /// [default: 25 log-spaced points on [0.01, 100] plus 2 and 3, or 1,2,5,10 for the p sweep].
    #[arg(long)]
    t: Option<String>,
    /// Comma-separated N₂/N₁ values for the size-ratio sweep.
    #[arg(long, default_value = "0.1,1,10")]
    size_ratio: String,
    /// Comma-separated group counts for the k sweep [default: 1..=k-max].
    #[arg(long)]
    k: Option<String>,
    /// Largest k when --k is not given.
    #[arg(long, default_value_t = 200)]
    k_max: usize,
    /// σ-ratio draws per k.
    #[arg(long, default_value_t = 200)]
    draws: usize,
    /// Leading σ-ratio draws per k that also get a Monte Carlo run.
    #[arg(long, default_value_t = 0)]
    mc_draws: usize,
    /// Budget per group in the k sweep.
    #[arg(long, default_value_t = 20)]
    n_per_group: u64,
    /// Size N₁ of the first group (and of every group in the k sweep).
    #[arg(long, default_value_t = 10_000)]
    group_size: u64,
    /// Comma-separated methods: UniformIPW, OracleOptimal, TwoStage, BayesSRW
    /// [default: UniformIPW,OracleOptimal, or UniformIPW,TwoStage for the p sweep,
    /// or OracleOptimal for the k sweep].
    #[arg(long)]
    method: Option<String>,
    /// Minimum pilot units per group.
    #[arg(long, default_value_t = 2)]
    min_pilot: u64,
    /// Confidence level for CI widths.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Worker threads; results do not depend on this [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Everything that determines the output files.
#[derive(Debug, Serialize)]
struct Resolved {
    sweep: Sweep,
    settings: SweepSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    size_ratios: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<KSweep>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    #[serde(flatten)]
    config: &'a Resolved,
    files: Vec<String>,
    notes: Vec<&'static str>,
}

pub fn default_t_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..25).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 24.0)).collect();
    grid.extend([2.0, 3.0]);
    grid.sort_by(f64::total_cmp);
    grid
}

fn parse_methods(s: &str) -> Result<Vec<Method>, CliError> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let m = Method::parse(part.trim()).ok_or_else(|| CliError::Usage(format!("unknown method `{part}`")))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn single(values: Vec<f64>, flag: &str) -> Result<f64, CliError> {
    match values.as_slice() {
        [v] => Ok(*v),
        _ => Err(CliError::Usage(format!("{flag} takes a single value for this sweep"))),
    }
}

fn resolve(a: &SimulateArgs) -> Result<Resolved, CliError> {
    let methods = match &a.method {
        Some(s) => parse_methods(s)?,
        None => match a.sweep {
            Sweep::T | Sweep::SizeRatio => vec![Method::UniformIpw, Method::OracleOptimal],
            Sweep::P => vec![Method::UniformIpw, Method::TwoStage],
            Sweep::K => vec![Method::OracleOptimal],
        },
    };
    let mut settings = SweepSettings::new(a.reps, a.seed, &methods);
    settings.group_size = a.group_size;
    settings.budget = a.n;
    settings.min_pilot_per_group = a.min_pilot;
    settings.level = a.level;

    let t = a.t.as_deref().map(|s| parse_list(s, "--t")).transpose()?;
    let p = a.p.as_deref().map(|s| parse_list(s, "--p")).transpose()?;
    if a.sweep != Sweep::P {
        if let Some(p) = p.clone() {
            settings.pilot_fraction = single(p, "--p")?;
        }
    }
    let mut r = Resolved {
        sweep: a.sweep,
        settings,
        t_grid: None,
        size_ratios: None,
        p_grid: None,
        k: None,
    };
    match a.sweep {
        Sweep::T => r.t_grid = Some(t.unwrap_or_else(default_t_grid)),
        Sweep::SizeRatio => {
            r.t_grid = Some(t.unwrap_or_else(default_t_grid));
            r.size_ratios = Some(parse_list(&a.size_ratio, "--size-ratio")?);
        }
        Sweep::P => {
            r.t_grid = Some(t.unwrap_or_else(|| vec![1.0, 2.0, 5.0, 10.0]));
            r.p_grid = Some(p.unwrap_or_else(|| vec![0.0, 0.02, 0.05, 0.1, 0.25, 0.5]));
        }
        Sweep::K => {
            let ks = match &a.k {
                Some(s) => s
                    .split(',')
                    .map(|v| v.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("--k: bad value `{v}`"))))
                    .collect::<Result<Vec<_>, _>>()?,
                None => (1..=a.k_max).collect(),
            };
            r.k = Some(KSweep {
                ks,
                draws_per_k: a.draws,
                mc_draws_per_k: a.mc_draws,
                budget_per_group: a.n_per_group,
            });
        }
    }
    Ok(r)
}

fn csv(points: &[CurvePoint]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_curve_csv(points, &mut buf).expect("writing to memory");
    buf
}

fn compute(r: &Resolved) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let s = &r.settings;
    let stem = r.sweep.stem();
    let t = || r.t_grid.as_deref().expect("resolved");
    Ok(match r.sweep {
        Sweep::T => vec![(format!("{stem}.csv"), csv(&sweep_t(t(), s)?))],
        Sweep::SizeRatio => sweep_size_ratio(r.size_ratios.as_deref().expect("resolved"), t(), s)?
            .into_iter()
            .map(|c| {
                let label = c.label.strip_prefix("ratio_").unwrap_or(&c.label);
                (format!("{stem}_{label}.csv"), csv(&c.points))
            })
            .collect(),
        Sweep::P => sweep_p(r.p_grid.as_deref().expect("resolved"), t(), s)?
            .into_iter()
            .map(|c| (format!("{stem}_{}.csv", c.label), csv(&c.points)))
            .collect(),
        Sweep::K => vec![(format!("{stem}.csv"), csv(&sweep_k(r.k.as_ref().expect("resolved"), s)?))],
    })
}

const NOTES: &[&str] = &[
    "var_ratio is the empirical variance of the method's estimate divided by that of the uniform (proportional) design, over common random numbers",
    "ci_reduction is 1 - sqrt(var_ratio); mc_se is the jackknife standard error of var_ratio over replications",
    "theory is f(t) for the oracle on equal groups, the general variance ratio otherwise, and the known-sd two-stage ratio for adaptive methods in the p sweep",
    "k sweep: N_i = group_size, budget = budget_per_group * k, sigma_1 = 1 and sigma_j = 10^Y with Y ~ Normal(0, 2); rows report medians over sigma draws",
    "all true group means are 0",
];

pub fn run(a: SimulateArgs) -> Result<(), CliError> {
    let resolved = resolve(&a)?;
    #[derive(Serialize)]
    struct Announced<'a> {
        #[serde(flatten)]
        resolved: &'a Resolved,
        threads: Option<usize>,
        out: &'a PathBuf,
    }
    announce("simulate", &Announced { resolved: &resolved, threads: a.threads, out: &a.out });

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = a.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let files = pool.install(|| compute(&resolved))?;

    let manifest = Manifest {
        tool: "srw",
        version: env!("CARGO_PKG_VERSION"),
        config: &resolved,
        files: files.iter().map(|(name, _)| name.clone()).collect(),
        notes: NOTES.to_vec(),
    };
    let manifest_name = format!("{}_manifest.json", resolved.sweep.stem());
    std::fs::create_dir_all(&a.out)?;
    let mut outs: Vec<Output> = files
        .into_iter()
        .map(|(name, body)| Output::new(Some(a.out.join(name)), body))
        .collect();
    outs.push(Output::new(Some(a.out.join(&manifest_name)), json(&manifest)));
    for o in &outs {
        eprintln!("srw simulate: writing {}", o.path.as_ref().expect("file output").display());
    }
    emit_all(outs)
}
