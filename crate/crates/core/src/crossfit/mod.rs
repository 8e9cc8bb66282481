//! First-stage adjustment with cross-fitting.
//!
//! An [`Adjuster`] turns training rows into an [`AdjustmentModel`]
//! `z -> η̂(z)`. The engine fits one model per fold on out-of-fold rows and
//! forms `M_i = Y_i - η̂_{s(i)}(Z_i)`; the second stage is a plain local
//! polynomial fit on `(X_i, M_i)` with weights from the full sample.

mod eq4;
pub mod learners;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;

use crate::basis::{Expansion, FeatureMap};
use crate::data::{Covariates, Dataset};
use crate::error::{RdError, Result};
use crate::inference::{nn_sigma2, standard_error, NnVariance, RdProblem};
use crate::kernels::Kernel;
use crate::locpoly::{fold_restricted_weights, RdFit, Side};
use crate::math::median;
use crate::seed::{derive_seed, stream_rng, Stream};

pub use eq4::Eq4Linear;
pub use learners::{Learner, SideModel};

/// Region `(-b, b)` and kernel used to localize first-stage fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationWindow {
    pub b: f64,
    pub kernel: Kernel,
}

impl LocalizationWindow {
    /// Uniform-kernel window of half-width `b`.
    pub fn new(b: f64) -> Self {
        LocalizationWindow {
            b,
            kernel: Kernel::Uniform,
        }
    }

    /// Weight of an observation on `side` (zero outside the window or on the
    /// other side). The upper end is open: `0 <= X < b`, `-b < X < 0`.
    pub fn weight(&self, x: f64, side: Side) -> f64 {
        if !side.contains(x) || x.abs() >= self.b {
            0.0
        } else {
            self.kernel.eval(x / self.b)
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x.abs() < self.b
    }
}

/// Random partition of `0..n` into `folds` groups whose sizes differ by at
/// most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub n: usize,
    pub folds: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn members(&self, s: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.fold_of[i] == s).collect()
    }

    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.folds];
        for (i, &s) in self.fold_of.iter().enumerate() {
            g[s].push(i);
        }
        g
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut c = vec![0; self.folds];
        for &s in &self.fold_of {
            c[s] += 1;
        }
        c
    }
}

/// Seeded uniform partition of `n` observations into `s` folds.
pub fn assign_folds(n: usize, s: usize, seed: u64) -> Result<FoldAssignment> {
    if s == 0 || s > n {
        return Err(RdError::InvalidArgument(format!(
            "cannot split {n} observations into {s} folds"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, Stream::Folds, 0));
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % s;
    }
    Ok(FoldAssignment {
        n,
        folds: s,
        fold_of,
    })
}

/// Second-stage bandwidth and order, for adjusters that need them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondStage {
    pub h: f64,
    pub kernel: Kernel,
    pub p: usize,
}

/// Everything an adjuster may look at.
///
/// With `cross_fit`, one model is produced per group, trained on the other
/// groups; otherwise a single model is trained on all groups.
pub struct FitTask<'a> {
    pub data: &'a Dataset,
    pub outcome: &'a [f64],
    pub groups: &'a [Vec<usize>],
    pub cross_fit: bool,
    pub window: LocalizationWindow,
    pub second_stage: Option<SecondStage>,
    pub seed: u64,
}

impl FitTask<'_> {
    /// Number of models to produce.
    pub fn targets(&self) -> usize {
        if self.cross_fit {
            self.groups.len()
        } else {
            1
        }
    }

    /// Group ids used to train model `t`.
    pub fn training_groups(&self, t: usize) -> Vec<usize> {
        (0..self.groups.len())
            .filter(|&g| !self.cross_fit || g != t)
            .collect()
    }

    /// Row ids used to train model `t`, ascending.
    pub fn training_rows(&self, t: usize) -> Vec<usize> {
        let mut r: Vec<usize> = self
            .training_groups(t)
            .into_iter()
            .flat_map(|g| self.groups[g].iter().copied())
            .collect();
        r.sort_unstable();
        r
    }
}

/// A fitted adjustment function.
pub trait AdjustmentModel: Send + Sync {
    fn eta(&self, z: &[f64]) -> f64;
}

/// First-stage estimator of the adjustment function.
pub trait Adjuster: Send + Sync {
    fn name(&self) -> String;

    /// Fits [`FitTask::targets`] models; model `t` may only read rows in
    /// [`FitTask::training_rows`]`(t)`.
    fn fit_all(&self, task: &FitTask<'_>) -> Result<Vec<Box<dyn AdjustmentModel>>>;
}

#[derive(Debug, Clone, Copy)]
struct ConstantModel(f64);

impl AdjustmentModel for ConstantModel {
    fn eta(&self, _z: &[f64]) -> f64 {
        self.0
    }
}

/// `η ≡ 0`: recovers the estimator without covariates.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroAdjuster;

impl Adjuster for ZeroAdjuster {
    fn name(&self) -> String {
        "zero".into()
    }

    fn fit_all(&self, task: &FitTask<'_>) -> Result<Vec<Box<dyn AdjustmentModel>>> {
        Ok((0..task.targets())
            .map(|_| Box::new(ConstantModel(0.0)) as Box<dyn AdjustmentModel>)
            .collect())
    }
}

/// `η ≡ c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantAdjuster(pub f64);

impl Adjuster for ConstantAdjuster {
    fn name(&self) -> String {
        format!("constant({})", self.0)
    }

    fn fit_all(&self, task: &FitTask<'_>) -> Result<Vec<Box<dyn AdjustmentModel>>> {
        Ok((0..task.targets())
            .map(|_| Box::new(ConstantModel(self.0)) as Box<dyn AdjustmentModel>)
            .collect())
    }
}

pub type EtaFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A known adjustment function (for instance a simulation oracle); ignores
/// the training data.
#[derive(Clone)]
pub struct FnAdjuster {
    pub label: String,
    pub f: EtaFn,
}

impl fmt::Debug for FnAdjuster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnAdjuster")
            .field("label", &self.label)
            .finish()
    }
}

struct FnModel(EtaFn);

impl AdjustmentModel for FnModel {
    fn eta(&self, z: &[f64]) -> f64 {
        (self.0)(z)
    }
}

impl Adjuster for FnAdjuster {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn fit_all(&self, task: &FitTask<'_>) -> Result<Vec<Box<dyn AdjustmentModel>>> {
        Ok((0..task.targets())
            .map(|_| Box::new(FnModel(self.f.clone())) as Box<dyn AdjustmentModel>)
            .collect())
    }
}

/// `η̂ = (μ̂⁺ + μ̂⁻)/2` with each side fitted by `learner` on the window rows
/// of that side, weighted by the window kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Localized {
    pub learner: Learner,
    pub expansion: Expansion,
}

impl Localized {
    pub fn new(learner: Learner) -> Self {
        Localized {
            learner,
            expansion: Expansion::Identity,
        }
    }

    pub fn with_expansion(learner: Learner, expansion: Expansion) -> Self {
        Localized { learner, expansion }
    }
}

fn side_ctx<'a>(
    task: &FitTask<'a>,
    z: &'a Covariates,
    w: &'a [f64],
    stats: bool,
) -> learners::SideCtx<'a> {
    let groups = task
        .groups
        .iter()
        .map(|g| g.iter().copied().filter(|&i| w[i] > 0.0).collect())
        .collect();
    learners::SideCtx::new(z, task.outcome, w, groups, stats)
}

struct LocalizedModel {
    map: Option<FeatureMap>,
    plus: SideModel,
    minus: SideModel,
}

impl AdjustmentModel for LocalizedModel {
    fn eta(&self, z: &[f64]) -> f64 {
        match &self.map {
            Some(m) => {
                let e = m.expand_row(z);
                0.5 * (self.plus.predict(&e) + self.minus.predict(&e))
            }
            None => 0.5 * (self.plus.predict(z) + self.minus.predict(z)),
        }
    }
}

impl Adjuster for Localized {
    fn name(&self) -> String {
        match self.expansion {
            Expansion::Identity => self.learner.name().into(),
            Expansion::Polynomial(k) => format!("{}+poly{k}", self.learner.name()),
            Expansion::Hermite(k) => format!("{}+hermite{k}", self.learner.name()),
        }
    }

    fn fit_all(&self, task: &FitTask<'_>) -> Result<Vec<Box<dyn AdjustmentModel>>> {
        let data = task.data;
        let map = FeatureMap::new(&self.expansion, data.z.ncols())?;
        let expanded;
        let z: &Covariates = if map.is_identity() {
            &data.z
        } else {
            expanded = map.apply(&data.z);
            &expanded
        };
        let stats = learners::learner_needs_stats(&self.learner);
        let weights = |side: Side| -> Vec<f64> {
            data.x
                .iter()
                .map(|&x| task.window.weight(x, side))
                .collect()
        };
        let (wp, wm) = (weights(Side::Plus), weights(Side::Minus));
        let ctx_plus = side_ctx(task, z, &wp, stats);
        let ctx_minus = side_ctx(task, z, &wm, stats);
        let mut out: Vec<Box<dyn AdjustmentModel>> = Vec::with_capacity(task.targets());
        for t in 0..task.targets() {
            let train = task.training_groups(t);
            for (ctx, side) in [(&ctx_plus, "plus"), (&ctx_minus, "minus")] {
                if ctx.count(&train) == 0 {
                    return Err(RdError::NoTrainingData {
                        fold: t,
                        reason: format!("no training rows on the {side} side of the window"),
                    });
                }
            }
            let seed = derive_seed(task.seed, Stream::AdjusterCv, t as u64);
            let plus = learners::fit_side(&self.learner, &ctx_plus, &train, seed);
            let minus = learners::fit_side(&self.learner, &ctx_minus, &train, seed ^ 1);
            out.push(Box::new(LocalizedModel {
                map: if map.is_identity() {
                    None
                } else {
                    Some(map.clone())
                },
                plus,
                minus,
            }));
        }
        Ok(out)
    }
}

/// Covariate-adjusted outcome column.
pub struct AdjustedDataset {
    /// `M_i = outcome_i - η̂_{s(i)}(Z_i)`.
    pub m: Vec<f64>,
    /// `η̂_{s(i)}(Z_i)`.
    pub eta: Vec<f64>,
    /// `None` when one model was fitted on the whole sample.
    pub folds: Option<FoldAssignment>,
    pub adjuster: String,
    /// Training rows inside the window, per model.
    pub training_sizes: Vec<usize>,
    pub models: Vec<Box<dyn AdjustmentModel>>,
}

impl fmt::Debug for AdjustedDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdjustedDataset")
            .field("adjuster", &self.adjuster)
            .field("n", &self.m.len())
            .field("training_sizes", &self.training_sizes)
            .finish()
    }
}

/// Settings shared by the fitting entry points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub window: LocalizationWindow,
    pub second_stage: Option<SecondStage>,
    pub seed: u64,
}

fn training_sizes(x: &[f64], task: &FitTask<'_>) -> Vec<usize> {
    (0..task.targets())
        .map(|t| {
            task.training_rows(t)
                .into_iter()
                .filter(|&i| task.window.contains(x[i]))
                .count()
        })
        .collect()
}

/// One model per fold, each trained on the other folds.
pub fn fit_adjusters(
    data: &Dataset,
    outcome: &[f64],
    folds: &FoldAssignment,
    adj: &dyn Adjuster,
    opts: &FitOptions,
) -> Result<Vec<Box<dyn AdjustmentModel>>> {
    Ok(fit_cross(data, outcome, folds, adj, opts)?.0)
}

fn fit_cross(
    data: &Dataset,
    outcome: &[f64],
    folds: &FoldAssignment,
    adj: &dyn Adjuster,
    opts: &FitOptions,
) -> Result<(Vec<Box<dyn AdjustmentModel>>, Vec<usize>)> {
    if folds.n != data.len() || outcome.len() != data.len() {
        return Err(RdError::InvalidArgument(
            "fold assignment does not match the data".into(),
        ));
    }
    let groups = folds.groups();
    for (s, g) in groups.iter().enumerate() {
        if g.len() == folds.n {
            return Err(RdError::NoTrainingData {
                fold: s,
                reason: "fold contains every observation, nothing is left out of fold".into(),
            });
        }
    }
    let task = FitTask {
        data,
        outcome,
        groups: &groups,
        cross_fit: true,
        window: opts.window,
        second_stage: opts.second_stage,
        seed: opts.seed,
    };
    let sizes = training_sizes(&data.x, &task);
    let models = adj.fit_all(&task)?;
    debug_assert_eq!(models.len(), folds.folds);
    Ok((models, sizes))
}

/// One model trained on every observation (no cross-fitting).
pub fn fit_in_sample(
    data: &Dataset,
    outcome: &[f64],
    adj: &dyn Adjuster,
    opts: &FitOptions,
) -> Result<Box<dyn AdjustmentModel>> {
    Ok(fit_whole(data, outcome, adj, opts)?.0)
}

fn fit_whole(
    data: &Dataset,
    outcome: &[f64],
    adj: &dyn Adjuster,
    opts: &FitOptions,
) -> Result<(Box<dyn AdjustmentModel>, Vec<usize>)> {
    let groups = vec![(0..data.len()).collect::<Vec<usize>>()];
    let task = FitTask {
        data,
        outcome,
        groups: &groups,
        cross_fit: false,
        window: opts.window,
        second_stage: opts.second_stage,
        seed: opts.seed,
    };
    let sizes = training_sizes(&data.x, &task);
    let mut models = adj.fit_all(&task)?;
    Ok((models.remove(0), sizes))
}

/// `m_i = outcome_i - η̂_{s(i)}(Z_i)`.
pub fn adjust(
    z: &Covariates,
    outcome: &[f64],
    folds: Option<&FoldAssignment>,
    models: Vec<Box<dyn AdjustmentModel>>,
    adjuster: String,
    training_sizes: Vec<usize>,
) -> AdjustedDataset {
    let n = outcome.len();
    let mut eta = vec![0.0; n];
    for (i, e) in eta.iter_mut().enumerate() {
        let s = folds.map_or(0, |f| f.fold_of[i]);
        *e = models[s].eta(z.row(i));
    }
    let m = outcome.iter().zip(&eta).map(|(y, e)| y - e).collect();
    AdjustedDataset {
        m,
        eta,
        folds: folds.cloned(),
        adjuster,
        training_sizes,
        models,
    }
}

/// Fits and applies an adjuster in one step: cross-fitted over `folds`, or
/// in-sample when `folds` is `None`.
pub fn cross_fit_adjust(
    data: &Dataset,
    outcome: &[f64],
    folds: Option<&FoldAssignment>,
    adj: &dyn Adjuster,
    opts: &FitOptions,
) -> Result<AdjustedDataset> {
    match folds {
        Some(f) => {
            let (models, sizes) = fit_cross(data, outcome, f, adj, opts)?;
            Ok(adjust(&data.z, outcome, Some(f), models, adj.name(), sizes))
        }
        None => {
            let (model, sizes) = fit_whole(data, outcome, adj, opts)?;
            Ok(adjust(
                &data.z,
                outcome,
                None,
                vec![model],
                adj.name(),
                sizes,
            ))
        }
    }
}

/// `τ̂(h; η̂) = Σ w_i(h) M_i` with full-sample weights and its NN standard
/// error.
pub fn estimate_dml2(
    x: &[f64],
    adjusted: &AdjustedDataset,
    kernel: Kernel,
    h: f64,
    p: usize,
    nn: &NnVariance,
) -> Result<RdFit> {
    RdProblem::new(x, &adjusted.m, kernel, nn)?.fit(h, p, 0)
}

/// Average of per-fold local polynomial estimates, each using only the
/// fold's observations. The standard error is `sqrt(Σ se_s²)/S` with NN
/// variances computed within each fold.
pub fn estimate_dml1(
    x: &[f64],
    adjusted: &AdjustedDataset,
    kernel: Kernel,
    h: f64,
    p: usize,
    folds: &FoldAssignment,
    nn: &NnVariance,
) -> Result<RdFit> {
    let s_count = folds.folds as f64;
    let (mut tau, mut var) = (0.0, 0.0);
    let (mut left, mut right) = (0, 0);
    for members in folds.groups() {
        let w = fold_restricted_weights(x, kernel, h, p, 0, Side::Jump, &members)?;
        tau += w.estimate(&adjusted.m);
        let xs: Vec<f64> = members.iter().map(|&i| x[i]).collect();
        let ms: Vec<f64> = members.iter().map(|&i| adjusted.m[i]).collect();
        let raw = nn_sigma2(&xs, &ms, nn.neighbors)?;
        let factor = if nn.finite_sample_correction {
            nn.neighbors as f64 / (nn.neighbors as f64 + 1.0)
        } else {
            1.0
        };
        let mut sigma2 = vec![0.0; x.len()];
        for (k, &i) in members.iter().enumerate() {
            sigma2[i] = raw[k] * factor;
        }
        let se = standard_error(&w, &sigma2);
        var += se * se;
        left += w.n_eff_left;
        right += w.n_eff_right;
    }
    Ok(RdFit {
        tau_hat: tau / s_count,
        se: var.sqrt() / s_count,
        h,
        p,
        v: 0,
        n_eff_left: left,
        n_eff_right: right,
        ci: None,
    })
}

/// Outcome of one sample split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitEstimate {
    pub tau: f64,
    pub se: f64,
    pub h: f64,
}

/// Median estimate, `sqrt(median(se_s² + (τ̂_s - τ̂_med)²))` and median
/// bandwidth over splits.
pub fn aggregate_splits(splits: &[SplitEstimate]) -> Result<SplitEstimate> {
    if splits.is_empty() {
        return Err(RdError::InvalidArgument("no splits to aggregate".into()));
    }
    if splits.len() == 1 {
        return Ok(splits[0]);
    }
    let taus: Vec<f64> = splits.iter().map(|s| s.tau).collect();
    let tau = median(&taus);
    let spread: Vec<f64> = splits
        .iter()
        .map(|s| s.se * s.se + (s.tau - tau) * (s.tau - tau))
        .collect();
    let hs: Vec<f64> = splits.iter().map(|s| s.h).collect();
    Ok(SplitEstimate {
        tau,
        se: median(&spread).sqrt(),
        h: median(&hs),
    })
}

/// Jump in the fitted adjustment `η̂_{s(i)}(Z_i)` at the cutoff; values far
/// from zero relative to the SE suggest the covariates are not
/// predetermined.
pub fn diag_adjustment_jump(
    x: &[f64],
    adjusted: &AdjustedDataset,
    kernel: Kernel,
    h: f64,
    nn: &NnVariance,
) -> Result<RdFit> {
    RdProblem::new(x, &adjusted.eta, kernel, nn)?.fit(h, 1, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes_balance() {
        let f = assign_folds(10, 5, 3).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
        let mut s = assign_folds(11, 5, 3).unwrap().sizes();
        s.sort_unstable();
        assert_eq!(s, vec![2, 2, 2, 2, 3]);
        assert_eq!(
            assign_folds(11, 5, 3).unwrap(),
            assign_folds(11, 5, 3).unwrap()
        );
        assert!(assign_folds(3, 4, 0).is_err());
    }

    #[test]
    fn split_aggregation_by_hand() {
        let s = [
            SplitEstimate {
                tau: 1.0,
                se: 0.5,
                h: 0.2,
            },
            SplitEstimate {
                tau: 2.0,
                se: 0.4,
                h: 0.3,
            },
            SplitEstimate {
                tau: 4.0,
                se: 0.3,
                h: 0.4,
            },
        ];
        let a = aggregate_splits(&s).unwrap();
        assert_eq!(a.tau, 2.0);
        // Spreads: 0.25 + 1, 0.16 + 0, 0.09 + 4 -> median 1.25.
        assert!((a.se - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(a.h, 0.3);
    }
}
