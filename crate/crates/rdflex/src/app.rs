//! Orchestration shared by the CLI and tests: load, estimate, report.

use std::path::Path;

use rdflex_core::pipeline::{run_fuzzy, run_sharp};
use rdflex_core::{Dataset, RdError};

use crate::config::{ConfigError, RunConfig};
use crate::io::{load_csv, DataError};
use crate::report::RunReport;
use crate::simulate::StudyError;

/// Process exit status for each failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("[config] {0}")]
    Config(#[from] ConfigError),
    #[error("[io] {0}")]
    Data(#[from] DataError),
    #[error("[{module}] {0}", module = module_of(.0))]
    Estimation(#[from] RdError),
    #[error("[simulate] {0}")]
    Study(#[from] StudyError),
    #[error("[io] {0}")]
    Io(#[from] std::io::Error),
}

/// Module that raises each core error.
pub fn module_of(e: &RdError) -> &'static str {
    match e {
        RdError::InsufficientSupport { .. } | RdError::SingularDesign { .. } => "locpoly",
        RdError::InsufficientNeighbors { .. } => "inference",
        RdError::NoTrainingData { .. } | RdError::AdjusterFit { .. } => "crossfit",
        RdError::DegenerateCurvature(_) => "bandwidth",
        RdError::WeakFirstStage { .. } | RdError::MissingTreatment => "fuzzy",
        RdError::DegenerateRunning(_) => "data",
        RdError::InvalidArgument(_) => "config",
    }
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => exit::CONFIG,
            AppError::Data(_) | AppError::Io(_) => exit::DATA,
            AppError::Estimation(e) => match e {
                RdError::InvalidArgument(_) => exit::CONFIG,
                RdError::MissingTreatment | RdError::DegenerateRunning(_) => exit::DATA,
                _ => exit::NUMERICAL,
            },
            AppError::Study(StudyError::Invalid(_)) => exit::CONFIG,
            AppError::Study(_) => exit::NUMERICAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    Sharp,
    Fuzzy,
}

/// Loads the configured input file.
pub fn load(config: &RunConfig) -> Result<(Dataset, usize), AppError> {
    let path = config
        .input
        .as_deref()
        .ok_or_else(|| ConfigError::Missing("input".into()))?;
    let loaded = load_csv(Path::new(path), &config.mapping, config.cutoff)?;
    Ok((loaded.dataset, loaded.dropped))
}

/// Estimation on an already loaded dataset.
pub fn run_on(
    data: &Dataset,
    config: &RunConfig,
    design: Design,
    dropped: usize,
) -> Result<RunReport, AppError> {
    let cfg = config.settings.to_pipeline(None)?;
    match design {
        Design::Sharp => {
            let res = run_sharp(data, &cfg)?;
            Ok(RunReport::sharp(config, &res, data.len(), dropped))
        }
        Design::Fuzzy => {
            if data.t.is_none() {
                return Err(RdError::MissingTreatment.into());
            }
            let t_spec = config.settings.treatment_spec(None)?;
            let res = run_fuzzy(data, &cfg, &t_spec)?;
            if res.fit.is_weak() {
                log::warn!(
                    "weak first stage: |tau_T|/se = {:.3}",
                    res.fit.first_stage_strength
                );
            }
            Ok(RunReport::fuzzy(config, &res, data.len(), dropped))
        }
    }
}

/// Full pipeline: load, estimate, report.
pub fn run(config: &RunConfig, design: Design) -> Result<RunReport, AppError> {
    let (data, dropped) = load(config)?;
    run_on(&data, config, design, dropped)
}
