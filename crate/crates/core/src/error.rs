use alloc::string::String;
use thiserror::Error;

use crate::locpoly::Side;

/// Errors raised by the estimation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RdError {
    #[error(
        "insufficient support on the {side:?} side: {available} usable points, need {required}"
    )]
    InsufficientSupport {
        side: Side,
        available: usize,
        required: usize,
    },
    #[error("singular local design on the {side:?} side (condition number {condition:.3e})")]
    SingularDesign { side: Side, condition: f64 },
    #[error(
        "fewer than {required} observations on the {side:?} side for nearest-neighbor variance"
    )]
    InsufficientNeighbors { side: Side, required: usize },
    #[error("no training data for fold {fold}: {reason}")]
    NoTrainingData { fold: usize, reason: String },
    #[error("adjuster failed on fold {fold}: {reason}")]
    AdjusterFit { fold: usize, reason: String },
    #[error("degenerate curvature estimate |gamma+ - gamma-| = {0:.3e}")]
    DegenerateCurvature(f64),
    #[error("degenerate running variable: {0}")]
    DegenerateRunning(String),
    #[error("weak first stage: |tau_T| = {tau_t:.3e}")]
    WeakFirstStage { tau_t: f64 },
    #[error("dataset has no treatment column")]
    MissingTreatment,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, RdError>;
