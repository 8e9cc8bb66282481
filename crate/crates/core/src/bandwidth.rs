//! Bandwidth selectors: the three-step MSE plug-in, the bias-aware
//! search, and the undersmoothing rule.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{RdError, Result};
use crate::inference::RdProblem;
use crate::kernels::jump_bias_factor;
use crate::linalg::{lstsq, Mat};
use crate::locpoly::Side;
use crate::math::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthMethod {
    CctMse,
    BiasAware,
    Undersmooth,
    Fixed,
}

impl BandwidthMethod {
    pub fn name(self) -> &'static str {
        match self {
            BandwidthMethod::CctMse => "cct_mse",
            BandwidthMethod::BiasAware => "bias_aware",
            BandwidthMethod::Undersmooth => "undersmooth",
            BandwidthMethod::Fixed => "fixed",
        }
    }
}

/// Quantities produced along the way by the three-step selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseIntermediates {
    pub v_n: f64,
    /// Step 0 constant and the resulting third-derivative pilot bandwidth.
    pub c_const: f64,
    pub c_n: f64,
    /// Step 1 constant and the resulting second-derivative pilot bandwidth.
    pub b_const: f64,
    pub b_n: f64,
    /// Step 2 constant (`h = (H_n / n)^{1/5}`).
    pub h_const: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthSelection {
    pub h: f64,
    pub method: BandwidthMethod,
    pub intermediates: Option<MseIntermediates>,
}

impl BandwidthSelection {
    pub fn fixed(h: f64) -> Self {
        BandwidthSelection {
            h,
            method: BandwidthMethod::Fixed,
            intermediates: None,
        }
    }
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// `2.58 min(S_X, IQR/1.349) n^{-1/5}`.
pub fn pilot_v_n(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = sample_sd(x).min(iqr / 1.349);
    2.58 * spread * (n as f64).powf(-0.2)
}

/// Global quartic fit on one side with basis `X^j / j!`; returns the
/// coefficient on `X^4/4!`.
fn global_quartic_curvature(x: &[f64], y: &[f64], side: Side) -> Result<f64> {
    let idx: Vec<usize> = (0..x.len()).filter(|&i| side.contains(x[i])).collect();
    if idx.len() < 5 {
        return Err(RdError::InsufficientSupport {
            side,
            available: idx.len(),
            required: 5,
        });
    }
    // Scale the regressor for conditioning and undo it afterwards.
    let scale = idx
        .iter()
        .map(|&i| x[i].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let fact = [1.0, 1.0, 2.0, 6.0, 24.0];
    let mut a = Mat::zeros(idx.len(), 5);
    let mut b = Vec::with_capacity(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        let u = x[i] / scale;
        let mut pw = 1.0;
        for j in 0..5 {
            a[(r, j)] = pw / fact[j];
            pw *= u;
        }
        b.push(y[i]);
    }
    let sol = lstsq(&a, &b, 1e-12);
    if sol.rank < 5 {
        return Err(RdError::SingularDesign {
            side,
            condition: f64::INFINITY,
        });
    }
    Ok(sol.coef[4] / scale.powi(4))
}

fn positive_finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(RdError::DegenerateRunning(format!(
            "{name} is not positive and finite ({v})"
        )))
    }
}

/// Three-step plug-in for the MSE-optimal local linear bandwidth, run on the
/// outcome column of `problem` (typically covariate-adjusted).
pub fn select_cct_mse(problem: &RdProblem<'_>) -> Result<BandwidthSelection> {
    let x = problem.x;
    let k = problem.kernel;
    let n = x.len() as f64;
    let v_n = positive_finite("pilot bandwidth v_n", pilot_v_n(x))?;

    let se2 = |h: f64, p: usize, v: usize| -> Result<f64> {
        let (_, se) = problem.estimate_se(h, p, v, Side::Jump)?;
        Ok(se * se)
    };
    let one_sided = |h: f64, p: usize, v: usize, side: Side| -> Result<f64> {
        Ok(problem.estimate_se(h, p, v, side)?.0)
    };

    // Step 0: fourth-derivative curvature from global quartics.
    let gamma_plus = global_quartic_curvature(x, problem.outcome, Side::Plus)?;
    let gamma_minus = global_quartic_curvature(x, problem.outcome, Side::Minus)?;
    let dgamma = gamma_plus - gamma_minus;
    if dgamma.abs() < 1e-12 {
        return Err(RdError::DegenerateCurvature(dgamma.abs()));
    }
    let j33 = jump_bias_factor(k, 3, 3);
    let c_const = 7.0 * n * v_n.powi(7) * se2(v_n, 3, 3)? / (2.0 * j33 * j33 * dgamma * dgamma);
    let c_n = positive_finite("pilot bandwidth c_n", (c_const / n).powf(1.0 / 9.0))?;

    // Step 1: second-derivative pilot.
    let m3 = one_sided(c_n, 3, 3, Side::Plus)? + one_sided(c_n, 3, 3, Side::Minus)?;
    let j22 = jump_bias_factor(k, 2, 2);
    let b_const = 5.0 * n * v_n.powi(5) * se2(v_n, 2, 2)?
        / (2.0 * j22 * j22 * (m3 * m3 + 3.0 * se2(c_n, 3, 3)?));
    let b_n = positive_finite("pilot bandwidth b_n", (b_const / n).powf(1.0 / 7.0))?;

    // Step 2: main bandwidth.
    let m2 = one_sided(b_n, 2, 2, Side::Plus)? - one_sided(b_n, 2, 2, Side::Minus)?;
    let j01 = jump_bias_factor(k, 0, 1);
    let h_const = n * v_n * se2(v_n, 1, 0)? / (4.0 * j01 * j01 * (m2 * m2 + 3.0 * se2(b_n, 2, 2)?));
    let h = positive_finite("bandwidth h", (h_const / n).powf(0.2))?;

    Ok(BandwidthSelection {
        h,
        method: BandwidthMethod::CctMse,
        intermediates: Some(MseIntermediates {
            v_n,
            c_const,
            c_n,
            b_const,
            b_n,
            h_const,
            gamma_plus,
            gamma_minus,
        }),
    })
}

/// `h · n^{-1/20}`.
pub fn select_undersmooth(base: &BandwidthSelection, n: usize) -> BandwidthSelection {
    BandwidthSelection {
        h: base.h * (n as f64).powf(-0.05),
        method: BandwidthMethod::Undersmooth,
        intermediates: None,
    }
}

/// Smallest bandwidth giving `p + 1` points with positive kernel weight on
/// each side (for kernels vanishing at the boundary the support is open, so
/// the bound is nudged up).
pub fn min_feasible_bandwidth(x: &[f64], p: usize) -> Result<f64> {
    let mut lo = 0.0_f64;
    for side in [Side::Plus, Side::Minus] {
        let mut d: Vec<f64> = x
            .iter()
            .filter(|&&v| side.contains(v))
            .map(|v| v.abs())
            .collect();
        if d.len() < p + 1 {
            return Err(RdError::InsufficientSupport {
                side,
                available: d.len(),
                required: p + 1,
            });
        }
        d.sort_by(|a, b| a.total_cmp(b));
        lo = lo.max(d[p]);
    }
    Ok(lo * (1.0 + 1e-9) + f64::MIN_POSITIVE)
}

/// What the bias-aware bandwidth search minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasAwareCriterion {
    /// Squared worst-case bias plus variance.
    #[default]
    WorstCaseMse,
    /// Half-length of the bias-aware interval.
    HalfLength,
}

impl BiasAwareCriterion {
    pub fn name(self) -> &'static str {
        match self {
            BiasAwareCriterion::WorstCaseMse => "worst_case_mse",
            BiasAwareCriterion::HalfLength => "half_length",
        }
    }
}

const GRID_POINTS: usize = 60;
const REFINE_TOL: f64 = 1e-4;

/// Bandwidth minimizing `criterion` for smoothness bound `smoothness`: a
/// 60-point log grid over `[h_min, max|X|]` followed by golden-section
/// refinement around the best grid point.
pub fn select_bias_aware(
    problem: &RdProblem<'_>,
    smoothness: f64,
    alpha: f64,
    criterion: BiasAwareCriterion,
) -> Result<BandwidthSelection> {
    if !(smoothness >= 0.0) || !smoothness.is_finite() {
        return Err(RdError::InvalidArgument(
            "smoothness bound must be nonnegative".into(),
        ));
    }
    let x = problem.x;
    let h_min = min_feasible_bandwidth(x, 1)?;
    let h_max = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(h_max > h_min) {
        return Err(RdError::DegenerateRunning(
            "no room between the smallest and largest feasible bandwidth".into(),
        ));
    }
    let objective = |h: f64| -> f64 {
        let v = match criterion {
            BiasAwareCriterion::WorstCaseMse => problem.worst_case_mse(h, smoothness),
            BiasAwareCriterion::HalfLength => problem.bias_aware_half_length(h, smoothness, alpha),
        };
        v.unwrap_or(f64::INFINITY)
    };
    let (l0, l1) = (h_min.ln(), h_max.ln());
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (GRID_POINTS - 1) as f64).exp())
        .collect();
    let values: Vec<f64> = grid.iter().map(|&h| objective(h)).collect();
    let best = (0..GRID_POINTS)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    if !values[best].is_finite() {
        return Err(RdError::DegenerateRunning(
            "bias-aware criterion is not finite at any candidate bandwidth".into(),
        ));
    }
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(GRID_POINTS - 1)];
    let (mut best_h, mut best_v) = (grid[best], values[best]);
    let ratio = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    while (b - a) > REFINE_TOL * best_h {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = objective(d);
        }
        for (h, v) in [(c, fc), (d, fd)] {
            if v < best_v {
                best_h = h;
                best_v = v;
            }
        }
    }
    Ok(BandwidthSelection {
        h: best_h,
        method: BandwidthMethod::BiasAware,
        intermediates: None,
    })
}
