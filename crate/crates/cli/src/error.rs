use std::fmt;
use std::process::ExitCode;

use srw_core::alloc::AllocError;
use srw_core::{BayesError, EstimateError, FrameError, SimError, TwoStageError};

/// Failure classes with fixed exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag values (exit 1).
    Usage(String),
    /// Unreadable or invalid input data (exit 2).
    Data(String),
    /// The budget or pilot cannot satisfy the design constraints (exit 3).
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Infeasible(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible configuration: {m}"),
        }
    }
}

impl From<FrameError> for CliError {
    fn from(e: FrameError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::BadLevel(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AllocError> for CliError {
    fn from(e: AllocError) -> Self {
        match e {
            AllocError::BudgetExceedsPopulation { .. } => CliError::Infeasible(e.to_string()),
            AllocError::ZeroBudget | AllocError::LengthMismatch { .. } | AllocError::NonpositiveRatio(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TwoStageError> for CliError {
    fn from(e: TwoStageError) -> Self {
        if e.is_infeasible() {
            return CliError::Infeasible(e.to_string());
        }
        match e {
            TwoStageError::InvalidConfig(m) => CliError::Usage(m),
            TwoStageError::Alloc(a) => a.into(),
            TwoStageError::Estimate(x) => x.into(),
            TwoStageError::Frame(f) => f.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<BayesError> for CliError {
    fn from(e: BayesError) -> Self {
        match e {
            BayesError::TwoStage(t) => t.into(),
            BayesError::InvalidPrior(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(m) => CliError::Usage(m),
            SimError::Alloc(a) => a.into(),
            SimError::Estimate(x) => x.into(),
            SimError::Frame(f) => f.into(),
            SimError::TwoStage(t) => t.into(),
            SimError::Bayes(b) => b.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("i/o: {e}"))
    }
}
