//! Covariate-adjusted regression discontinuity estimation.
//!
//! Local polynomial weights, nearest-neighbor standard errors, bandwidth
//! selectors, cross-fitted covariate adjustment and fuzzy designs. The crate
//! is `no_std` (it needs `alloc`); file formats, the CLI and the simulation
//! harness live in the `rdflex` crate.
#![no_std]

extern crate alloc;

pub mod bandwidth;
pub mod basis;
pub mod crossfit;
pub mod data;
pub mod error;
pub mod fuzzy;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod locpoly;
pub mod math;
pub mod pipeline;
pub mod seed;

pub use bandwidth::{BandwidthMethod, BandwidthSelection, BiasAwareCriterion, MseIntermediates};
pub use crossfit::{Adjuster, AdjustmentModel, FoldAssignment, LocalizationWindow, Localized};
pub use data::{Column, Covariates, Dataset};
pub use error::{RdError, Result};
pub use fuzzy::FuzzyFit;
pub use inference::{CiMethod, ConfidenceInterval, NnVariance, RdProblem};
pub use kernels::Kernel;
pub use locpoly::{LocalPolyWeights, RdFit, Side};
pub use pipeline::{AdjusterSpec, BandwidthPolicy, PipelineConfig, WindowPolicy};
