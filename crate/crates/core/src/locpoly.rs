//! One- and two-sided local polynomial weights.
//!
//! For side `*`, order `p` and coefficient `v` the weights are
//! `w*_i = e_v' (Σ_j K*_h(X_j) X̃_j X̃_j')^{-1} K*_h(X_i) X̃_i`, with
//! `X̃ = (1, X, ..., X^p)`. The normal equations are formed on the rescaled
//! basis `(1, X/h, ..., (X/h)^p)`, solved through a symmetric
//! eigendecomposition (so the condition number is available), and mapped back
//! by the factor `h^{-v}`. Jump weights are `w⁺ - w⁻`.
//!
//! Observations with `X = 0` belong to the plus side.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{RdError, Result};
use crate::inference::ConfidenceInterval;
use crate::kernels::Kernel;
use crate::linalg::{Mat, SymEigen};
use crate::math::factorial;

/// Condition number of the rescaled moment matrix beyond which a local
/// design is declared singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
    Jump,
}

impl Side {
    #[inline]
    pub fn contains(self, x: f64) -> bool {
        match self {
            Side::Plus => x >= 0.0,
            Side::Minus => x < 0.0,
            Side::Jump => true,
        }
    }
}

/// Weights for one side (or the jump), aligned with the observations.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPolyWeights {
    pub side: Side,
    pub v: usize,
    pub p: usize,
    pub h: f64,
    pub w: Vec<f64>,
    /// Nonzero-weight counts left and right of the cutoff.
    pub n_eff_left: usize,
    pub n_eff_right: usize,
}

impl LocalPolyWeights {
    /// `Σ w_i col_i`: the raw coefficient (`m^(v)/v!` scale).
    pub fn apply(&self, col: &[f64]) -> f64 {
        debug_assert_eq!(col.len(), self.w.len());
        self.w
            .iter()
            .zip(col)
            .filter(|(w, _)| **w != 0.0)
            .map(|(w, c)| w * c)
            .sum()
    }

    /// `v! Σ w_i col_i`: the derivative (or derivative-jump) estimate.
    pub fn estimate(&self, col: &[f64]) -> f64 {
        factorial(self.v) * self.apply(col)
    }
}

/// Weights of one half line for observations passing `keep`.
fn half_weights(
    x: &[f64],
    keep: &dyn Fn(usize) -> bool,
    kernel: Kernel,
    h: f64,
    p: usize,
    v: usize,
    side: Side,
) -> Result<(Vec<f64>, usize)> {
    debug_assert!(side != Side::Jump);
    let dim = p + 1;
    let mut active: Vec<(usize, f64, f64)> = Vec::new();
    for (i, &xi) in x.iter().enumerate() {
        if !side.contains(xi) || !keep(i) {
            continue;
        }
        let u = xi / h;
        let k = kernel.eval(u);
        if k > 0.0 {
            active.push((i, u, k));
        }
    }
    if active.len() < dim {
        return Err(RdError::InsufficientSupport {
            side,
            available: active.len(),
            required: dim,
        });
    }
    let mut s = Mat::zeros(dim, dim);
    let mut powers = vec![0.0; 2 * dim - 1];
    for &(_, u, k) in &active {
        let mut pw = k;
        for slot in powers.iter_mut() {
            *slot += pw;
            pw *= u;
        }
    }
    for a in 0..dim {
        for b in 0..dim {
            s[(a, b)] = powers[a + b];
        }
    }
    let eig = SymEigen::new(&s);
    let condition = eig.condition();
    if !(condition < MAX_CONDITION) {
        return Err(RdError::SingularDesign { side, condition });
    }
    let mut e = vec![0.0; dim];
    e[v] = 1.0;
    let a = eig.solve(&e);
    let scale = h.powi(-(v as i32));
    let mut w = vec![0.0; x.len()];
    for &(i, u, k) in &active {
        let mut poly = 0.0;
        let mut pw = 1.0;
        for coef in &a {
            poly += coef * pw;
            pw *= u;
        }
        w[i] = k * poly * scale;
    }
    Ok((w, active.len()))
}

fn check_args(h: f64, p: usize, v: usize) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(RdError::InvalidArgument(alloc::format!(
            "bandwidth must be positive and finite, got {h}"
        )));
    }
    if v > p {
        return Err(RdError::InvalidArgument(alloc::format!(
            "derivative order {v} exceeds polynomial order {p}"
        )));
    }
    Ok(())
}

fn weights_with_filter(
    x: &[f64],
    keep: &dyn Fn(usize) -> bool,
    kernel: Kernel,
    h: f64,
    p: usize,
    v: usize,
    side: Side,
) -> Result<LocalPolyWeights> {
    check_args(h, p, v)?;
    let (w, n_left, n_right) = match side {
        Side::Plus => {
            let (w, n) = half_weights(x, keep, kernel, h, p, v, Side::Plus)?;
            (w, 0, n)
        }
        Side::Minus => {
            let (w, n) = half_weights(x, keep, kernel, h, p, v, Side::Minus)?;
            (w, n, 0)
        }
        Side::Jump => {
            let (mut wp, n_right) = half_weights(x, keep, kernel, h, p, v, Side::Plus)?;
            let (wm, n_left) = half_weights(x, keep, kernel, h, p, v, Side::Minus)?;
            for (a, b) in wp.iter_mut().zip(&wm) {
                *a -= b;
            }
            (wp, n_left, n_right)
        }
    };
    Ok(LocalPolyWeights {
        side,
        v,
        p,
        h,
        w,
        n_eff_left: n_left,
        n_eff_right: n_right,
    })
}

/// Local polynomial weights of order `p` for coefficient `v` on `side`.
pub fn local_poly_weights(
    x: &[f64],
    kernel: Kernel,
    h: f64,
    p: usize,
    v: usize,
    side: Side,
) -> Result<LocalPolyWeights> {
    weights_with_filter(x, &|_| true, kernel, h, p, v, side)
}

/// As [`local_poly_weights`] but using only the observations listed in
/// `fold`; the returned weights are aligned with the full `x` and vanish
/// outside the fold.
pub fn fold_restricted_weights(
    x: &[f64],
    kernel: Kernel,
    h: f64,
    p: usize,
    v: usize,
    side: Side,
    fold: &[usize],
) -> Result<LocalPolyWeights> {
    let mut member = vec![false; x.len()];
    for &i in fold {
        member[i] = true;
    }
    weights_with_filter(x, &|i| member[i], kernel, h, p, v, side)
}

/// `v! Σ_i w_{i,v,p}(h) outcome_i`, the jump in the `v`-th derivative.
pub fn rd_point_estimate(
    x: &[f64],
    outcome: &[f64],
    kernel: Kernel,
    h: f64,
    p: usize,
    v: usize,
) -> Result<f64> {
    let w = local_poly_weights(x, kernel, h, p, v, Side::Jump)?;
    Ok(w.estimate(outcome))
}

/// Result of one RD estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RdFit {
    pub tau_hat: f64,
    pub se: f64,
    pub h: f64,
    pub p: usize,
    pub v: usize,
    pub n_eff_left: usize,
    pub n_eff_right: usize,
    pub ci: Option<ConfidenceInterval>,
}
