//! `srw`: allocation, estimation, two-stage designs and simulation sweeps.

mod error;
mod output;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use srw_core::alloc::SdVector;
use srw_core::{
    estimate_with_ci, load_frame, load_observations, optimal_allocation, proportional_allocation,
    PopulationFrame, PriorConfig, SdSource, TwoStageConfig,
};

use error::CliError;
use output::{emit, Output};

#[derive(Parser, Debug)]
#[command(name = "srw", version, about = "Variance-minimizing sample allocation across groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Allocate a budget across the groups of a frame.
    Allocate(AllocateArgs),
    /// IPW estimate and confidence interval from observations.
    Estimate(EstimateArgs),
    /// Run the pilot-then-Neyman design against a fully specified frame.
    Twostage(TwoStageArgs),
    /// Run the empirical-Bayes two-stage design against a fully specified frame.
    BayesSrw(BayesArgs),
    /// Monte Carlo sweeps comparing the designs.
    Simulate(simulate::SimulateArgs),
}

#[derive(Args, Debug)]
struct AllocateArgs {
    /// Frame CSV with header `group,size[,mean,sd]`.
    #[arg(long)]
    frame: PathBuf,
    /// Total sampling budget.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// `proportional`, `frame` (the frame's sd column) or a comma-separated list.
    #[arg(long, default_value = "proportional")]
    sd: String,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    frame: PathBuf,
    /// Observation CSV with header `group,stage,value`.
    #[arg(long)]
    obs: PathBuf,
    /// `sample` for per-group sample sds, `frame`, or a comma-separated list.
    #[arg(long, default_value = "sample")]
    sd: String,
    /// Confidence level of the interval.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct DesignArgs {
    /// Frame CSV with true means and sds: `group,size,mean,sd`.
    #[arg(long)]
    frame: PathBuf,
    /// Total budget over both stages.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Pilot fraction in [0, 1).
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    /// Seed for the simulated observations.
    #[arg(long)]
    seed: u64,
    /// Minimum pilot units per group.
    #[arg(long, default_value_t = 2)]
    min_pilot: u64,
    /// Floor for pilot sds; defaults to 1e-9 × (max |pilot value| + 1).
    #[arg(long)]
    sd_floor: Option<f64>,
    /// Estimate from stage-2 observations only.
    #[arg(long)]
    discard_pilot: bool,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Write the JSON trace to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl DesignArgs {
    fn config(&self) -> TwoStageConfig {
        TwoStageConfig {
            min_pilot_per_group: self.min_pilot,
            sd_floor: self.sd_floor,
            reuse_pilot: !self.discard_pilot,
            level: self.level,
            ..TwoStageConfig::new(self.n, self.p)
        }
    }
}

#[derive(Args, Debug)]
struct TwoStageArgs {
    #[command(flatten)]
    design: DesignArgs,
}

#[derive(Args, Debug)]
struct BayesArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Points in the μ grid.
    #[arg(long, default_value_t = 41)]
    mu_grid: usize,
    /// Points in the σ grid.
    #[arg(long, default_value_t = 41)]
    sigma_grid: usize,
    /// EM iteration cap.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// EM relative log-likelihood tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

/// Prints the resolved configuration to standard error.
fn announce<T: Serialize>(command: &str, config: &T) {
    let json = serde_json::to_string(config).expect("config serializes");
    eprintln!("srw {command} config: {json}");
}

pub fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{what}: cannot parse `{v}` as a number")))
        })
        .collect()
}

fn frame_sds(frame: &PopulationFrame) -> Result<SdVector, CliError> {
    Ok(SdVector::for_frame(frame, frame.require_truth()?.iter().map(|t| t.sd).collect())?)
}

fn allocate(args: AllocateArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Resolved<'a> {
        frame: &'a PathBuf,
        n: u64,
        sd: &'a str,
        format: Format,
        out: &'a Option<PathBuf>,
    }
    announce(
        "allocate",
        &Resolved { frame: &args.frame, n: args.n, sd: &args.sd, format: args.format, out: &args.out },
    );
    let frame = load_frame(&args.frame)?;
    let plan = match args.sd.as_str() {
        "proportional" => proportional_allocation(&frame, args.n)?,
        "frame" => optimal_allocation(&frame, &frame_sds(&frame)?, args.n)?,
        list => {
            let sd = SdVector::for_frame(&frame, parse_list(list, "--sd")?).map_err(|e| CliError::Usage(e.to_string()))?;
            optimal_allocation(&frame, &sd, args.n)?
        }
    };
    eprintln!("srw allocate: method={} budget={}", plan.method(), plan.budget());
    let body = match args.format {
        Format::Csv => {
            let mut buf = Vec::new();
            plan.write_csv(&frame, &mut buf)?;
            buf
        }
        Format::Json => output::json(&plan.document(&frame)),
    };
    emit(Output::new(args.out, body))
}

fn estimate(args: EstimateArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Resolved<'a> {
        frame: &'a PathBuf,
        obs: &'a PathBuf,
        sd: &'a str,
        level: f64,
        format: Format,
        out: &'a Option<PathBuf>,
    }
    announce(
        "estimate",
        &Resolved {
            frame: &args.frame,
            obs: &args.obs,
            sd: &args.sd,
            level: args.level,
            format: args.format,
            out: &args.out,
        },
    );
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Usage("--level must lie in (0, 1)".into()));
    }
    let frame = load_frame(&args.frame)?;
    let obs = load_observations(&args.obs, &frame)?;
    let source = match args.sd.as_str() {
        "sample" => SdSource::Sample,
        "frame" => SdSource::External(frame_sds(&frame)?),
        list => SdSource::External(
            SdVector::for_frame(&frame, parse_list(list, "--sd")?).map_err(|e| CliError::Usage(e.to_string()))?,
        ),
    };
    let counts = obs.counts();
    let result = estimate_with_ci(&obs, &frame, &counts, &source, args.level)?;
    if result.unsampled_groups {
        eprintln!("srw estimate: warning: some groups have no observations; the estimate ignores them");
    }
    let body = match args.format {
        Format::Csv => {
            let mut buf = Vec::new();
            result.write_csv_summary(&mut buf)?;
            buf
        }
        Format::Json => output::json(&result),
    };
    emit(Output::new(args.out, body))
}

fn twostage(args: TwoStageArgs) -> Result<(), CliError> {
    let d = &args.design;
    announce("twostage", &(d, d.config()));
    let frame = load_frame(&d.frame)?;
    let trace = srw_core::run_two_stage_seeded(&frame, &d.config(), d.seed)?;
    emit(Output::new(d.out.clone(), output::json(&trace)))
}

fn bayes_srw(args: BayesArgs) -> Result<(), CliError> {
    let d = &args.design;
    let prior = PriorConfig {
        mu_points: args.mu_grid,
        sigma_points: args.sigma_grid,
        max_iter: args.max_iter,
        rel_tol: args.tol,
    };
    announce("bayes-srw", &(d, d.config(), &prior));
    let frame = load_frame(&d.frame)?;
    let outcome = srw_core::bayes::run_bayes_srw_seeded(&frame, &d.config(), &prior, d.seed)?;
    emit(Output::new(d.out.clone(), output::json(&outcome)))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Allocate(a) => allocate(a),
        Command::Estimate(a) => estimate(a),
        Command::Twostage(a) => twostage(a),
        Command::BayesSrw(a) => bayes_srw(a),
        Command::Simulate(a) => simulate::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("srw: {e}");
            e.exit_code()
        }
    }
}
