//! Nearest-neighbor variances, standard errors and confidence intervals.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{RdError, Result};
use crate::kernels::Kernel;
use crate::locpoly::{local_poly_weights, LocalPolyWeights, RdFit, Side};
use crate::math::{factorial, z_crit};

/// Default number of same-side neighbors.
pub const DEFAULT_NEIGHBORS: usize = 3;

/// Nearest-neighbor variance settings.
///
/// With `finite_sample_correction` the squared residuals are scaled by
/// `R/(R+1)`, which makes them unbiased for the conditional variance when the
/// regression function is locally flat (the raw residual carries the
/// neighbors' noise as well).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NnVariance {
    pub neighbors: usize,
    pub finite_sample_correction: bool,
}

impl Default for NnVariance {
    fn default() -> Self {
        NnVariance {
            neighbors: DEFAULT_NEIGHBORS,
            finite_sample_correction: true,
        }
    }
}

impl NnVariance {
    pub fn raw(neighbors: usize) -> Self {
        NnVariance {
            neighbors,
            finite_sample_correction: false,
        }
    }

    pub fn sigma2(&self, x: &[f64], outcome: &[f64]) -> Result<Vec<f64>> {
        let mut s = nn_sigma2(x, outcome, self.neighbors)?;
        if self.finite_sample_correction {
            let c = self.neighbors as f64 / (self.neighbors as f64 + 1.0);
            s.iter_mut().for_each(|v| *v *= c);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiMethod {
    Undersmoothing,
    Rbc,
    BiasAware,
}

impl CiMethod {
    pub fn name(self) -> &'static str {
        match self {
            CiMethod::Undersmoothing => "undersmoothing",
            CiMethod::Rbc => "rbc",
            CiMethod::BiasAware => "bias_aware",
        }
    }
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub method: CiMethod,
    pub half_length: f64,
    pub bias_bound: Option<f64>,
}

impl ConfidenceInterval {
    pub fn centered(
        center: f64,
        half: f64,
        alpha: f64,
        method: CiMethod,
        bias: Option<f64>,
    ) -> Self {
        ConfidenceInterval {
            lo: center - half,
            hi: center + half,
            level: 1.0 - alpha,
            method,
            half_length: half,
            bias_bound: bias,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Indices on one side ordered by `(x, index)`.
fn sorted_side(x: &[f64], side: Side) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).filter(|&i| side.contains(x[i])).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    idx
}

/// `σ̂²_i = (M_i - mean of M over the R nearest same-side neighbors)²`.
///
/// Neighbors exclude `i` itself; distance ties are broken by smaller index.
pub fn nn_sigma2(x: &[f64], outcome: &[f64], r: usize) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(RdError::InvalidArgument(
            "neighbor count must be >= 1".into(),
        ));
    }
    if x.len() != outcome.len() {
        return Err(RdError::InvalidArgument(
            "x and outcome lengths differ".into(),
        ));
    }
    let mut out = vec![0.0; x.len()];
    let mut cand: Vec<(f64, usize)> = Vec::new();
    for side in [Side::Plus, Side::Minus] {
        let order = sorted_side(x, side);
        let m = order.len();
        if m < r + 1 {
            return Err(RdError::InsufficientNeighbors {
                side,
                required: r + 1,
            });
        }
        for pos in 0..m {
            let i = order[pos];
            let xi = x[i];
            cand.clear();
            // Walk outward in sorted order; candidates arrive by nondecreasing distance.
            let (mut lo, mut hi) = (pos, pos + 1);
            let mut cutoff = f64::INFINITY;
            loop {
                let dl = if lo > 0 {
                    xi - x[order[lo - 1]]
                } else {
                    f64::INFINITY
                };
                let dr = if hi < m {
                    x[order[hi]] - xi
                } else {
                    f64::INFINITY
                };
                let d = dl.min(dr);
                if !d.is_finite() || d > cutoff {
                    break;
                }
                if dl <= dr {
                    lo -= 1;
                    cand.push((dl, order[lo]));
                } else {
                    cand.push((dr, order[hi]));
                    hi += 1;
                }
                if cand.len() == r {
                    cutoff = d;
                }
            }
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mean = cand[..r].iter().map(|&(_, j)| outcome[j]).sum::<f64>() / r as f64;
            let e = outcome[i] - mean;
            out[i] = e * e;
        }
    }
    Ok(out)
}

/// `v! sqrt(Σ w_i² σ̂²_i)`.
pub fn standard_error(weights: &LocalPolyWeights, sigma2: &[f64]) -> f64 {
    debug_assert_eq!(weights.w.len(), sigma2.len());
    let s: f64 = weights
        .w
        .iter()
        .zip(sigma2)
        .filter(|(w, _)| **w != 0.0)
        .map(|(w, s)| w * w * s)
        .sum();
    factorial(weights.v) * s.max(0.0).sqrt()
}

/// Symmetric interval `τ̂ ± z_{α} se`.
pub fn ci_undersmoothing(fit: &RdFit, alpha: f64) -> ConfidenceInterval {
    let half = z_crit(alpha, 0.0) * fit.se;
    ConfidenceInterval::centered(fit.tau_hat, half, alpha, CiMethod::Undersmoothing, None)
}

/// Bias-aware interval `τ̂ ± z_α(|b̄|/se) se`, given the worst-case bias
/// `bias_bound = |b̄|`.
pub fn bias_aware_half_length(se: f64, bias_bound: f64, alpha: f64) -> f64 {
    if se > 0.0 {
        z_crit(alpha, bias_bound / se) * se
    } else {
        bias_bound
    }
}

/// An outcome column together with its running variable and NN variances.
///
/// The NN variances do not depend on the bandwidth, so they are computed once
/// and reused across candidate bandwidths.
#[derive(Debug, Clone)]
pub struct RdProblem<'a> {
    pub x: &'a [f64],
    pub outcome: &'a [f64],
    pub kernel: Kernel,
    pub sigma2: Vec<f64>,
}

impl<'a> RdProblem<'a> {
    pub fn new(x: &'a [f64], outcome: &'a [f64], kernel: Kernel, nn: &NnVariance) -> Result<Self> {
        let sigma2 = nn.sigma2(x, outcome)?;
        Ok(RdProblem {
            x,
            outcome,
            kernel,
            sigma2,
        })
    }

    pub fn with_sigma2(x: &'a [f64], outcome: &'a [f64], kernel: Kernel, sigma2: Vec<f64>) -> Self {
        RdProblem {
            x,
            outcome,
            kernel,
            sigma2,
        }
    }

    pub fn weights(&self, h: f64, p: usize, v: usize, side: Side) -> Result<LocalPolyWeights> {
        local_poly_weights(self.x, self.kernel, h, p, v, side)
    }

    /// `(estimate, se)` for coefficient `v` of order `p` on `side`, on the
    /// derivative scale.
    pub fn estimate_se(&self, h: f64, p: usize, v: usize, side: Side) -> Result<(f64, f64)> {
        let w = self.weights(h, p, v, side)?;
        Ok((w.estimate(self.outcome), standard_error(&w, &self.sigma2)))
    }

    pub fn fit(&self, h: f64, p: usize, v: usize) -> Result<RdFit> {
        let w = self.weights(h, p, v, Side::Jump)?;
        Ok(RdFit {
            tau_hat: w.estimate(self.outcome),
            se: standard_error(&w, &self.sigma2),
            h,
            p,
            v,
            n_eff_left: w.n_eff_left,
            n_eff_right: w.n_eff_right,
            ci: None,
        })
    }

    /// Local linear fit with a naive normal interval.
    pub fn fit_undersmoothing(&self, h: f64, alpha: f64) -> Result<RdFit> {
        let mut fit = self.fit(h, 1, 0)?;
        fit.ci = Some(ci_undersmoothing(&fit, alpha));
        Ok(fit)
    }

    /// Robust bias-corrected interval: local quadratic estimate and SE at `h`.
    pub fn fit_rbc(&self, h: f64, alpha: f64) -> Result<RdFit> {
        let mut fit = self.fit(h, 2, 0)?;
        let half = z_crit(alpha, 0.0) * fit.se;
        fit.ci = Some(ConfidenceInterval::centered(
            fit.tau_hat,
            half,
            alpha,
            CiMethod::Rbc,
            None,
        ));
        Ok(fit)
    }

    /// `b̄(h) = -(B_Y/2) Σ w_i X_i² sign(X_i)` for local linear jump weights.
    pub fn bias_bound(&self, w: &LocalPolyWeights, smoothness: f64) -> f64 {
        let s: f64 =
            w.w.iter()
                .zip(self.x)
                .filter(|(wi, _)| **wi != 0.0)
                .map(|(wi, &xi)| wi * xi * xi * sign(xi))
                .sum();
        -0.5 * smoothness * s
    }

    /// Half-length of the bias-aware interval at `h` (local linear).
    pub fn bias_aware_half_length(&self, h: f64, smoothness: f64, alpha: f64) -> Result<f64> {
        let w = self.weights(h, 1, 0, Side::Jump)?;
        let se = standard_error(&w, &self.sigma2);
        Ok(bias_aware_half_length(
            se,
            self.bias_bound(&w, smoothness).abs(),
            alpha,
        ))
    }

    /// Worst-case MSE `b̄(h)² + se(h)²` of the local linear jump at `h`.
    pub fn worst_case_mse(&self, h: f64, smoothness: f64) -> Result<f64> {
        let w = self.weights(h, 1, 0, Side::Jump)?;
        let se = standard_error(&w, &self.sigma2);
        let b = self.bias_bound(&w, smoothness);
        Ok(b * b + se * se)
    }

    pub fn fit_bias_aware(&self, h: f64, smoothness: f64, alpha: f64) -> Result<RdFit> {
        if !(smoothness >= 0.0) {
            return Err(RdError::InvalidArgument(
                "smoothness bound must be nonnegative".into(),
            ));
        }
        let w = self.weights(h, 1, 0, Side::Jump)?;
        let tau = w.estimate(self.outcome);
        let se = standard_error(&w, &self.sigma2);
        let bias = self.bias_bound(&w, smoothness).abs();
        let half = bias_aware_half_length(se, bias, alpha);
        Ok(RdFit {
            tau_hat: tau,
            se,
            h,
            p: 1,
            v: 0,
            n_eff_left: w.n_eff_left,
            n_eff_right: w.n_eff_right,
            ci: Some(ConfidenceInterval::centered(
                tau,
                half,
                alpha,
                CiMethod::BiasAware,
                Some(bias),
            )),
        })
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nn_hand_example() {
        let x = [0.1, 0.2, 0.3, -0.1, -0.2, -0.3];
        let m = [1.0, 2.0, 4.0, 0.0, 0.0, 0.0];
        let s = nn_sigma2(&x, &m, 2).unwrap();
        assert_eq!(s[0], 4.0);
        assert_eq!(&s[3..], &[0.0, 0.0, 0.0]);
        // R = 1 mutual neighbors.
        let s = nn_sigma2(&[0.5, 0.7, -0.5, -0.7], &[1.0, 4.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(&s[..2], &[9.0, 9.0]);
    }

    #[test]
    fn nn_ties_prefer_smaller_index() {
        // Point 1 at 0.5 has neighbors 0 (0.25) and 2 (0.75) at equal distance.
        let x = [0.25, 0.5, 0.75, -0.1, -0.2];
        let m = [10.0, 0.0, 20.0, 0.0, 0.0];
        let s = nn_sigma2(&x, &m, 1).unwrap();
        assert_eq!(s[1], 100.0);
    }

    #[test]
    fn corrected_variance_scales_by_r_over_r_plus_one() {
        let x = [0.1, 0.2, 0.3, -0.1, -0.2, -0.3];
        let m = [1.0, 2.0, 4.0, 0.0, 0.0, 0.0];
        let s = NnVariance {
            neighbors: 2,
            finite_sample_correction: true,
        }
        .sigma2(&x, &m)
        .unwrap();
        assert!((s[0] - 4.0 * 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nn_needs_enough_points() {
        let r = nn_sigma2(&[0.1, 0.2, -0.1], &[0.0; 3], 1);
        assert!(matches!(
            r,
            Err(RdError::InsufficientNeighbors {
                side: Side::Minus,
                ..
            })
        ));
    }

    #[test]
    fn bias_aware_reduces_to_naive_without_bias() {
        assert!((bias_aware_half_length(1.0, 0.0, 0.05) - 1.959963984540054).abs() < 1e-9);
        assert_eq!(bias_aware_half_length(0.0, 0.3, 0.05), 0.3);
    }
}
