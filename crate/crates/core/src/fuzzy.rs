//! Fuzzy designs: ratio of two adjusted sharp jumps sharing one set of
//! weights.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{RdError, Result};
use crate::inference::{standard_error, NnVariance};
use crate::kernels::Kernel;
use crate::locpoly::{local_poly_weights, Side};

/// `|τ̂_T|` below this is treated as no first stage at all.
pub const WEAK_FLOOR: f64 = 1e-6;
/// First-stage t-statistic below which results are flagged as weak.
pub const WEAK_WARN_STRENGTH: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyFit {
    pub theta_hat: f64,
    pub tau_y: f64,
    pub tau_t: f64,
    pub se: f64,
    pub h: f64,
    pub p: usize,
    /// `|τ̂_T| / se(τ̂_T)`.
    pub first_stage_strength: f64,
    pub n_eff_left: usize,
    pub n_eff_right: usize,
}

impl FuzzyFit {
    pub fn is_weak(&self) -> bool {
        self.first_stage_strength < WEAK_WARN_STRENGTH
    }
}

/// `θ̂ = τ̂_Y / τ̂_T` from adjusted outcome `m_y` and adjusted treatment `m_t`,
/// both built on the same folds. The SE applies the sharp formula to
/// `Û_i = (M_Y,i - θ̂ M_T,i) / τ̂_T`.
pub fn estimate_fuzzy(
    x: &[f64],
    m_y: &[f64],
    m_t: &[f64],
    kernel: Kernel,
    h: f64,
    p: usize,
    nn: &NnVariance,
) -> Result<FuzzyFit> {
    if m_y.len() != x.len() || m_t.len() != x.len() {
        return Err(RdError::InvalidArgument("column lengths differ".into()));
    }
    let w = local_poly_weights(x, kernel, h, p, 0, Side::Jump)?;
    let tau_y = w.estimate(m_y);
    let tau_t = w.estimate(m_t);
    if !(tau_t.abs() > WEAK_FLOOR) {
        return Err(RdError::WeakFirstStage { tau_t });
    }
    let theta = tau_y / tau_t;
    let u: Vec<f64> = m_y
        .iter()
        .zip(m_t)
        .map(|(y, t)| (y - theta * t) / tau_t)
        .collect();
    let se = standard_error(&w, &nn.sigma2(x, &u)?);
    let se_t = standard_error(&w, &nn.sigma2(x, m_t)?);
    let strength = if se_t > 0.0 {
        tau_t.abs() / se_t
    } else {
        f64::INFINITY
    };
    Ok(FuzzyFit {
        theta_hat: theta,
        tau_y,
        tau_t,
        se,
        h,
        p,
        first_stage_strength: strength,
        n_eff_left: w.n_eff_left,
        n_eff_right: w.n_eff_right,
    })
}
