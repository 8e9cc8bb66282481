//! End-to-end sharp and fuzzy estimation: folds, first stage, bandwidth,
//! second stage and interval, repeated over sample splits.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::bandwidth::{
    select_bias_aware, select_cct_mse, select_undersmooth, BandwidthSelection, BiasAwareCriterion,
};
use crate::crossfit::{
    aggregate_splits, assign_folds, cross_fit_adjust, diag_adjustment_jump, AdjustedDataset,
    Adjuster, Eq4Linear, FitOptions, FnAdjuster, FoldAssignment, LocalizationWindow, Localized,
    SecondStage, SplitEstimate, ZeroAdjuster,
};
use crate::data::Dataset;
use crate::error::{RdError, Result};
use crate::fuzzy::{estimate_fuzzy, FuzzyFit};
use crate::inference::{
    bias_aware_half_length, ci_undersmoothing, CiMethod, ConfidenceInterval, NnVariance, RdProblem,
};
use crate::kernels::Kernel;
use crate::locpoly::RdFit;
use crate::math::{median, z_crit};
use crate::seed::{derive_seed, Stream};

/// How the second-stage bandwidth is chosen for a given outcome column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthPolicy {
    /// Three-step MSE plug-in.
    Mse,
    /// Bias-aware search under a smoothness bound.
    BiasAware(BiasAwareCriterion),
    /// MSE plug-in times `n^{-1/20}`.
    Undersmooth,
    Fixed(f64),
}

/// First-stage window half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowPolicy {
    /// `factor ×` the bandwidth chosen for the unadjusted outcome.
    Auto(f64),
    Fixed(f64),
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy::Auto(2.0)
    }
}

/// Which first stage to run.
#[derive(Debug, Clone)]
pub enum AdjusterSpec {
    Zero,
    /// A known function, e.g. a simulation oracle.
    Function(FnAdjuster),
    /// Side-wise localized learner, cross-fitted.
    Localized(Localized),
    /// Joint linear regression with covariates entered linearly, refitted
    /// once after a bandwidth update; in-sample or cross-fitted.
    JointLinear {
        cross_fit: bool,
    },
}

impl AdjusterSpec {
    pub fn name(&self) -> String {
        match self {
            AdjusterSpec::Zero => "zero".into(),
            AdjusterSpec::Function(f) => f.label.clone(),
            AdjusterSpec::Localized(l) => l.name(),
            AdjusterSpec::JointLinear { cross_fit: false } => "linear-nocf".into(),
            AdjusterSpec::JointLinear { cross_fit: true } => "linear-cf".into(),
        }
    }

    fn uses_folds(&self) -> bool {
        matches!(
            self,
            AdjusterSpec::Localized(_) | AdjusterSpec::JointLinear { cross_fit: true }
        )
    }

    fn needs_window(&self) -> bool {
        matches!(self, AdjusterSpec::Localized(_))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub kernel: Kernel,
    /// Local polynomial order for undersmoothing intervals; RBC always uses
    /// 2 and bias-aware intervals 1.
    pub p: usize,
    pub adjuster: AdjusterSpec,
    pub folds: usize,
    pub splits: usize,
    pub window: WindowPolicy,
    pub bandwidth: BandwidthPolicy,
    pub ci: CiMethod,
    pub alpha: f64,
    pub smoothness: Option<f64>,
    pub nn: NnVariance,
    pub seed: u64,
    /// Compute the adjustment-jump diagnostic on the first split.
    pub diagnostics: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kernel: Kernel::Triangular,
            p: 1,
            adjuster: AdjusterSpec::Zero,
            folds: 5,
            splits: 1,
            window: WindowPolicy::default(),
            bandwidth: BandwidthPolicy::Mse,
            ci: CiMethod::Rbc,
            alpha: 0.05,
            smoothness: None,
            nn: NnVariance::default(),
            seed: 0,
            diagnostics: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RdError::InvalidArgument(m.into()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.splits == 0 {
            return bad("at least one split is required");
        }
        if self.folds == 0 {
            return bad("at least one fold is required");
        }
        let needs_m = self.ci == CiMethod::BiasAware
            || matches!(self.bandwidth, BandwidthPolicy::BiasAware(_));
        if needs_m && self.smoothness.is_none() {
            return bad("bias-aware bandwidth or interval needs a smoothness bound");
        }
        if let Some(m) = self.smoothness {
            if !(m >= 0.0) || !m.is_finite() {
                return bad("smoothness bound must be nonnegative and finite");
            }
        }
        match self.bandwidth {
            BandwidthPolicy::Fixed(h) if !(h > 0.0) || !h.is_finite() => {
                return bad("fixed bandwidth must be positive");
            }
            _ => {}
        }
        let (WindowPolicy::Fixed(b) | WindowPolicy::Auto(b)) = self.window;
        if !(b > 0.0) || !b.is_finite() {
            return bad("first-stage window must be positive");
        }
        Ok(())
    }

    /// Second-stage polynomial order implied by the interval method.
    pub fn second_stage_order(&self) -> usize {
        match self.ci {
            CiMethod::Rbc => 2,
            CiMethod::BiasAware => 1,
            CiMethod::Undersmoothing => self.p,
        }
    }
}

/// Bandwidth for `problem` under `policy`.
pub fn select_bandwidth(
    problem: &RdProblem<'_>,
    policy: BandwidthPolicy,
    smoothness: Option<f64>,
    alpha: f64,
) -> Result<BandwidthSelection> {
    match policy {
        BandwidthPolicy::Mse => select_cct_mse(problem),
        BandwidthPolicy::Undersmooth => Ok(select_undersmooth(
            &select_cct_mse(problem)?,
            problem.x.len(),
        )),
        BandwidthPolicy::BiasAware(criterion) => {
            let m = smoothness.ok_or_else(|| {
                RdError::InvalidArgument("bias-aware bandwidth needs a smoothness bound".into())
            })?;
            select_bias_aware(problem, m, alpha, criterion)
        }
        BandwidthPolicy::Fixed(h) => Ok(BandwidthSelection::fixed(h)),
    }
}

/// Second-stage fit with the configured interval at bandwidth `h`.
pub fn fit_with_interval(problem: &RdProblem<'_>, h: f64, cfg: &PipelineConfig) -> Result<RdFit> {
    match cfg.ci {
        CiMethod::Undersmoothing => {
            let mut fit = problem.fit(h, cfg.p, 0)?;
            fit.ci = Some(ci_undersmoothing(&fit, cfg.alpha));
            Ok(fit)
        }
        CiMethod::Rbc => problem.fit_rbc(h, cfg.alpha),
        CiMethod::BiasAware => {
            let m = cfg.smoothness.ok_or_else(|| {
                RdError::InvalidArgument("bias-aware interval needs a smoothness bound".into())
            })?;
            problem.fit_bias_aware(h, m, cfg.alpha)
        }
    }
}

/// Per-split record.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRun {
    pub seed: u64,
    pub tau: f64,
    pub se: f64,
    pub h: f64,
    pub bias_bound: Option<f64>,
    /// First-stage window, when one was used.
    pub window_b: Option<f64>,
    pub training_sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SharpResult {
    /// Aggregated fit (median over splits) with its interval.
    pub fit: RdFit,
    /// Bandwidth selection of the first split.
    pub selection: BandwidthSelection,
    /// Bandwidth chosen for the unadjusted outcome, when it was needed.
    pub baseline_h: Option<f64>,
    pub adjuster: String,
    pub splits: Vec<SplitRun>,
    /// Jump in the fitted adjustment on the first split.
    pub adjustment_jump: Option<RdFit>,
}

/// Unadjusted-outcome bandwidth, computed lazily once.
struct Baseline<'a> {
    data: &'a Dataset,
    outcome: &'a [f64],
    cfg: &'a PipelineConfig,
    h: Option<f64>,
}

impl Baseline<'_> {
    fn h(&mut self) -> Result<f64> {
        if let Some(h) = self.h {
            return Ok(h);
        }
        let problem = RdProblem::new(&self.data.x, self.outcome, self.cfg.kernel, &self.cfg.nn)?;
        let h = select_bandwidth(
            &problem,
            self.cfg.bandwidth,
            self.cfg.smoothness,
            self.cfg.alpha,
        )?
        .h;
        self.h = Some(h);
        Ok(h)
    }
}

/// Adjusted outcome for one split plus the window used.
fn first_stage(
    data: &Dataset,
    outcome: &[f64],
    spec: &AdjusterSpec,
    folds: Option<&FoldAssignment>,
    cfg: &PipelineConfig,
    base: &mut Baseline<'_>,
    seed: u64,
) -> Result<(AdjustedDataset, Option<f64>)> {
    let window_b = if spec.needs_window() {
        Some(match cfg.window {
            WindowPolicy::Fixed(b) => b,
            WindowPolicy::Auto(factor) => factor * base.h()?,
        })
    } else {
        None
    };
    let opts = |second_stage: Option<SecondStage>| FitOptions {
        window: LocalizationWindow::new(window_b.unwrap_or(f64::INFINITY)),
        second_stage,
        seed,
    };
    // Fixed functions ignore the data, so they need no folds.
    let adjusted = match spec {
        AdjusterSpec::Zero => cross_fit_adjust(data, outcome, None, &ZeroAdjuster, &opts(None))?,
        AdjusterSpec::Function(f) => cross_fit_adjust(data, outcome, None, f, &opts(None))?,
        AdjusterSpec::Localized(l) => cross_fit_adjust(data, outcome, folds, l, &opts(None))?,
        AdjusterSpec::JointLinear { cross_fit } => {
            let adj = Eq4Linear {
                order: cfg.second_stage_order(),
            };
            let folds = if *cross_fit { folds } else { None };
            let stage = |h: f64| {
                Some(SecondStage {
                    h,
                    kernel: cfg.kernel,
                    p: adj.order,
                })
            };
            let first = cross_fit_adjust(data, outcome, folds, &adj, &opts(stage(base.h()?)))?;
            let problem = RdProblem::new(&data.x, &first.m, cfg.kernel, &cfg.nn)?;
            let h1 = select_bandwidth(&problem, cfg.bandwidth, cfg.smoothness, cfg.alpha)?.h;
            let mut second = cross_fit_adjust(data, outcome, folds, &adj, &opts(stage(h1)))?;
            second.adjuster = spec.name();
            second
        }
    };
    Ok((adjusted, window_b))
}

fn split_seed(master: u64, s: usize) -> u64 {
    derive_seed(master, Stream::Splits, s as u64)
}

fn aggregate_interval(
    tau: f64,
    se: f64,
    bias: Option<f64>,
    method: CiMethod,
    alpha: f64,
) -> ConfidenceInterval {
    match (method, bias) {
        (CiMethod::BiasAware, Some(b)) => ConfidenceInterval::centered(
            tau,
            bias_aware_half_length(se, b, alpha),
            alpha,
            method,
            Some(b),
        ),
        _ => ConfidenceInterval::centered(tau, z_crit(alpha, 0.0) * se, alpha, method, None),
    }
}

/// Sharp RD estimate with covariate adjustment, aggregated over
/// `cfg.splits` random fold assignments.
pub fn run_sharp(data: &Dataset, cfg: &PipelineConfig) -> Result<SharpResult> {
    cfg.validate()?;
    let mut base = Baseline {
        data,
        outcome: &data.y,
        cfg,
        h: None,
    };
    let mut runs = Vec::with_capacity(cfg.splits);
    let mut first: Option<(BandwidthSelection, RdFit, Option<RdFit>)> = None;
    for s in 0..cfg.splits {
        let seed = split_seed(cfg.seed, s);
        let folds = match cfg.adjuster.uses_folds() {
            true => Some(assign_folds(data.len(), cfg.folds, seed)?),
            false => None,
        };
        let (adjusted, window_b) = first_stage(
            data,
            &data.y,
            &cfg.adjuster,
            folds.as_ref(),
            cfg,
            &mut base,
            seed,
        )?;
        let problem = RdProblem::new(&data.x, &adjusted.m, cfg.kernel, &cfg.nn)?;
        let selection = select_bandwidth(&problem, cfg.bandwidth, cfg.smoothness, cfg.alpha)?;
        if matches!(cfg.adjuster, AdjusterSpec::Zero) {
            base.h.get_or_insert(selection.h);
        }
        let fit = fit_with_interval(&problem, selection.h, cfg)?;
        runs.push(SplitRun {
            seed,
            tau: fit.tau_hat,
            se: fit.se,
            h: selection.h,
            bias_bound: fit.ci.as_ref().and_then(|c| c.bias_bound),
            window_b,
            training_sizes: adjusted.training_sizes.clone(),
        });
        if first.is_none() {
            let jump = if cfg.diagnostics {
                Some(diag_adjustment_jump(
                    &data.x,
                    &adjusted,
                    cfg.kernel,
                    selection.h,
                    &cfg.nn,
                )?)
            } else {
                None
            };
            first = Some((selection, fit, jump));
        }
    }
    let (selection, first_fit, jump) = first.expect("at least one split");
    let fit = if runs.len() == 1 {
        first_fit
    } else {
        let agg = aggregate_splits(
            &runs
                .iter()
                .map(|r| SplitEstimate {
                    tau: r.tau,
                    se: r.se,
                    h: r.h,
                })
                .collect::<Vec<_>>(),
        )?;
        let bias = if cfg.ci == CiMethod::BiasAware {
            let b: Vec<f64> = runs.iter().filter_map(|r| r.bias_bound).collect();
            Some(median(&b))
        } else {
            None
        };
        RdFit {
            tau_hat: agg.tau,
            se: agg.se,
            h: agg.h,
            ci: Some(aggregate_interval(agg.tau, agg.se, bias, cfg.ci, cfg.alpha)),
            ..first_fit
        }
    };
    Ok(SharpResult {
        fit,
        selection,
        baseline_h: base.h,
        adjuster: cfg.adjuster.name(),
        splits: runs,
        adjustment_jump: jump,
    })
}

#[derive(Debug, Clone)]
pub struct FuzzyResult {
    /// Aggregated over splits (median θ̂, split-adjusted SE, median h).
    pub fit: FuzzyFit,
    pub ci: ConfidenceInterval,
    pub outcome_adjuster: String,
    pub treatment_adjuster: String,
    pub splits: Vec<SplitRun>,
}

/// Fuzzy RD: outcome and treatment adjusted separately on the same folds;
/// the bandwidth is chosen on the adjusted outcome and shared.
pub fn run_fuzzy(
    data: &Dataset,
    cfg: &PipelineConfig,
    treatment_adjuster: &AdjusterSpec,
) -> Result<FuzzyResult> {
    cfg.validate()?;
    if cfg.ci == CiMethod::BiasAware {
        return Err(RdError::InvalidArgument(
            "bias-aware intervals are only available for sharp designs".into(),
        ));
    }
    let t = data.t.as_deref().ok_or(RdError::MissingTreatment)?;
    let mut base_y = Baseline {
        data,
        outcome: &data.y,
        cfg,
        h: None,
    };
    let p = cfg.second_stage_order();
    let mut runs = Vec::with_capacity(cfg.splits);
    let mut fits: Vec<FuzzyFit> = Vec::with_capacity(cfg.splits);
    for s in 0..cfg.splits {
        let seed = split_seed(cfg.seed, s);
        let folds = match cfg.adjuster.uses_folds() || treatment_adjuster.uses_folds() {
            true => Some(assign_folds(data.len(), cfg.folds, seed)?),
            false => None,
        };
        let (adj_y, window_b) = first_stage(
            data,
            &data.y,
            &cfg.adjuster,
            folds.as_ref(),
            cfg,
            &mut base_y,
            seed,
        )?;
        // The treatment side reuses the outcome's window and bandwidths.
        let mut base_t = Baseline {
            data,
            outcome: t,
            cfg,
            h: Some(base_y.h()?),
        };
        let (adj_t, _) = first_stage(
            data,
            t,
            treatment_adjuster,
            folds.as_ref(),
            cfg,
            &mut base_t,
            derive_seed(seed, Stream::AdjusterCv, u64::MAX),
        )?;
        let problem = RdProblem::new(&data.x, &adj_y.m, cfg.kernel, &cfg.nn)?;
        let h = select_bandwidth(&problem, cfg.bandwidth, cfg.smoothness, cfg.alpha)?.h;
        let fit = estimate_fuzzy(&data.x, &adj_y.m, &adj_t.m, cfg.kernel, h, p, &cfg.nn)?;
        runs.push(SplitRun {
            seed,
            tau: fit.theta_hat,
            se: fit.se,
            h,
            bias_bound: None,
            window_b,
            training_sizes: adj_y.training_sizes.clone(),
        });
        fits.push(fit);
    }
    let agg = aggregate_splits(
        &runs
            .iter()
            .map(|r| SplitEstimate {
                tau: r.tau,
                se: r.se,
                h: r.h,
            })
            .collect::<Vec<_>>(),
    )?;
    let mut fit = fits.swap_remove(0);
    if runs.len() > 1 {
        fit.theta_hat = agg.tau;
        fit.se = agg.se;
        fit.h = agg.h;
    }
    let ci = aggregate_interval(fit.theta_hat, fit.se, None, cfg.ci, cfg.alpha);
    Ok(FuzzyResult {
        fit,
        ci,
        outcome_adjuster: cfg.adjuster.name(),
        treatment_adjuster: treatment_adjuster.name(),
        splits: runs,
    })
}

/// Boxed adjuster for a spec, for callers driving the engine directly.
/// Joint-linear specs need a second-stage bandwidth at fit time.
pub fn build_adjuster(spec: &AdjusterSpec, order: usize) -> Box<dyn Adjuster> {
    match spec {
        AdjusterSpec::Zero => Box::new(ZeroAdjuster),
        AdjusterSpec::Function(f) => Box::new(f.clone()),
        AdjusterSpec::Localized(l) => Box::new(l.clone()),
        AdjusterSpec::JointLinear { .. } => Box::new(Eq4Linear { order }),
    }
}
