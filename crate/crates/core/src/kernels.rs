//! Kernel functions on `[-1, 1]` and the kernel-dependent constants that
//! govern the asymptotic bias and variance of boundary local polynomial fits.
//!
//! Conventions used throughout the crate:
//!
//! * local polynomial coefficient `v` estimates `m^(v)(0) / v!`; anything
//!   reported as a derivative estimate multiplies that coefficient by `v!`;
//! * the leading bias of the side-`*` derivative estimator of order `p` is
//!   `h^(p+1-v) * v! * B*_{v,p} * m^(p+1)(0*)`, i.e. the `1/(p+1)!` of the
//!   Taylor remainder is folded into the stored constant [`bias_constant`].

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{Mat, SymEigen};
use crate::math::factorial;

/// Symmetric density kernel supported on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Kernel {
    Uniform,
    #[default]
    Triangular,
    Epanechnikov,
}

/// Side of the cutoff for one-sided kernel moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfLine {
    Plus,
    Minus,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::Uniform, Kernel::Triangular, Kernel::Epanechnikov];

    /// `K(v)`; the support is closed, so `K(±1)` is the boundary value.
    #[inline]
    pub fn eval(self, v: f64) -> f64 {
        let a = v.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Uniform => 0.5,
            Kernel::Triangular => 1.0 - a,
            Kernel::Epanechnikov => 0.75 * (1.0 - a * a),
        }
    }

    /// `∫_0^∞ v^j K(v) dv`, closed form.
    pub fn moment(self, j: usize) -> f64 {
        let j = j as f64;
        match self {
            Kernel::Uniform => 0.5 / (j + 1.0),
            Kernel::Triangular => 1.0 / ((j + 1.0) * (j + 2.0)),
            Kernel::Epanechnikov => 0.75 * (1.0 / (j + 1.0) - 1.0 / (j + 3.0)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Uniform => "uniform",
            Kernel::Triangular => "triangular",
            Kernel::Epanechnikov => "epanechnikov",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = crate::RdError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Kernel::Uniform),
            "triangular" => Ok(Kernel::Triangular),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            other => Err(crate::RdError::InvalidArgument(alloc::format!(
                "unknown kernel '{other}'"
            ))),
        }
    }
}

/// `ν̄_0 .. ν̄_{j_max}` with `ν̄_j = ∫_0^∞ v^j K(v) dv`.
pub fn one_sided_moments(k: Kernel, j_max: usize) -> Vec<f64> {
    (0..=j_max).map(|j| k.moment(j)).collect()
}

/// One-sided moments by adaptive Simpson quadrature; an independent route to
/// the closed forms above.
pub fn one_sided_moments_quadrature(k: Kernel, j_max: usize) -> Vec<f64> {
    (0..=j_max)
        .map(|j| adaptive_simpson(&|v: f64| v.powi(j as i32) * k.eval(v), 0.0, 1.0, 1e-14, 40))
        .collect()
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let (d, e) = (0.5 * (a + c), 0.5 * (c + b));
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, c, fa, fc, fd, left, tol / 2.0, depth - 1)
        + simpson_step(f, c, b, fc, fb, fe, right, tol / 2.0, depth - 1)
}

/// `(ν̄, κ̄)`: the local linear boundary bias and variance constants.
pub fn nu_bar_kappa_bar(k: Kernel) -> (f64, f64) {
    let nu = one_sided_moments(k, 3);
    let denom = nu[2] * nu[0] - nu[1] * nu[1];
    let nu_bar = (nu[2] * nu[2] - nu[1] * nu[3]) / denom;
    // ∫_0^1 K(v)^2 (ν̄_1 v - ν̄_2)^2 dv; the integrand is a polynomial of
    // degree <= 6 on [0,1], so 8-point Gauss-Legendre is exact.
    let integral = gauss_legendre_01(|v| {
        let kv = k.eval(v);
        let lin = nu[1] * v - nu[2];
        kv * kv * lin * lin
    });
    (nu_bar, integral / (denom * denom))
}

fn gauss_legendre_01(f: impl Fn(f64) -> f64) -> f64 {
    const NODES: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let mut s = 0.0;
    for (x, w) in NODES.iter().zip(WEIGHTS) {
        s += w * (f(0.5 + 0.5 * x) + f(0.5 - 0.5 * x));
    }
    0.5 * s
}

/// One-sided moment on the requested half line; `ν̄⁻_j = (-1)^j ν̄_j`.
fn signed_moment(k: Kernel, j: usize, side: HalfLine) -> f64 {
    let m = k.moment(j);
    match side {
        HalfLine::Plus => m,
        HalfLine::Minus if j % 2 == 1 => -m,
        HalfLine::Minus => m,
    }
}

/// `B*_{v,p} = e_v' S_p^{-1} c_p / (p+1)!` for the given side.
///
/// Panics if `v > p`; `S_p` is a Hankel moment matrix of a density with mass
/// on `(0, 1)` and is positive definite for every built-in kernel.
pub fn bias_constant(k: Kernel, v: usize, p: usize, side: HalfLine) -> f64 {
    assert!(v <= p, "derivative order exceeds polynomial order");
    let dim = p + 1;
    let mut s = Mat::zeros(dim, dim);
    let mut c = vec![0.0; dim];
    for i in 0..dim {
        for j in 0..dim {
            s[(i, j)] = signed_moment(k, i + j, side);
        }
        c[i] = signed_moment(k, p + 1 + i, side);
    }
    let eig = SymEigen::new(&s);
    assert!(eig.condition().is_finite(), "singular kernel moment matrix");
    eig.solve(&c)[v] / factorial(p + 1)
}

/// `B⁺_{v,p} - B⁻_{v,p}`.
pub fn bias_constant_jump(k: Kernel, v: usize, p: usize) -> f64 {
    bias_constant(k, v, p, HalfLine::Plus) - bias_constant(k, v, p, HalfLine::Minus)
}

/// Constant multiplying `h^(p+1-v) (m⁺^(p+1) - (-1)^(p+1-v) m⁻^(p+1))` in the
/// leading bias of the order-`p` derivative-jump estimator: `v! B⁺_{v,p}`.
///
/// This is what the plug-in bandwidth formulas need. It coincides with
/// [`bias_constant_jump`] for `(v, p) = (2, 2)`, and for `(0, 1)` it equals
/// `ν̄ / 2`, the constant in the familiar `h^2 ν̄/2 (m''⁺ - m''⁻)` bias.
pub fn jump_bias_factor(k: Kernel, v: usize, p: usize) -> f64 {
    factorial(v) * bias_constant(k, v, p, HalfLine::Plus)
}

/// Bundle of constants for one kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConstants {
    pub kernel: Kernel,
    pub nu_bar_j: Vec<f64>,
    pub nu_bar: f64,
    pub kappa_bar: f64,
}

impl KernelConstants {
    /// Moments up to order `2p + 3`.
    pub fn new(kernel: Kernel, p: usize) -> Self {
        let (nu_bar, kappa_bar) = nu_bar_kappa_bar(kernel);
        KernelConstants {
            kernel,
            nu_bar_j: one_sided_moments(kernel, 2 * p + 3),
            nu_bar,
            kappa_bar,
        }
    }

    pub fn bias(&self, v: usize, p: usize, side: HalfLine) -> f64 {
        bias_constant(self.kernel, v, p, side)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert_eq!(Kernel::Uniform.eval(0.5), 0.5);
        assert_eq!(Kernel::Triangular.eval(0.5), 0.5);
        assert_eq!(Kernel::Triangular.eval(1.5), 0.0);
        assert_eq!(Kernel::Uniform.eval(1.0), 0.5);
        assert_eq!(Kernel::Epanechnikov.eval(-1.0), 0.0);
        assert_eq!(Kernel::Epanechnikov.eval(0.0), 0.75);
    }

    #[test]
    fn closed_form_moments() {
        let u = one_sided_moments(Kernel::Uniform, 3);
        let want = [0.5, 0.25, 1.0 / 6.0, 0.125];
        for (g, w) in u.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        let t = one_sided_moments(Kernel::Triangular, 3);
        let want = [0.5, 1.0 / 6.0, 1.0 / 12.0, 1.0 / 20.0];
        for (g, w) in t.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        for k in Kernel::ALL {
            assert!((k.moment(0) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for k in Kernel::ALL {
            let exact = one_sided_moments(k, 11);
            let quad = one_sided_moments_quadrature(k, 11);
            for (j, (e, q)) in exact.iter().zip(&quad).enumerate() {
                assert!((e - q).abs() / e < 1e-10, "{k} j={j}: {e} vs {q}");
            }
            for w in exact.windows(2) {
                assert!(w[1] < w[0]);
            }
        }
    }

    #[test]
    fn nu_kappa_values() {
        let (nu, kappa) = nu_bar_kappa_bar(Kernel::Uniform);
        assert!((nu + 1.0 / 6.0).abs() < 1e-12);
        assert!((kappa - 4.0).abs() < 1e-12);
        let (nu, kappa) = nu_bar_kappa_bar(Kernel::Triangular);
        assert!((nu + 0.1).abs() < 1e-12);
        assert!((kappa - 4.8).abs() < 1e-12);
        for k in Kernel::ALL {
            let m = one_sided_moments(k, 2);
            assert!(m[2] * m[0] - m[1] * m[1] > 0.0);
        }
    }

    #[test]
    fn uniform_local_linear_bias_constant_by_hand() {
        // S_1 = [[1/2, 1/4], [1/4, 1/6]], c_1 = [1/6, 1/8]:
        // det = 1/12 - 1/16 = 1/48; e_0' S^{-1} c = 48 (1/6*1/6 - 1/4*1/8)
        //     = 48 (1/36 - 1/32) = -1/6.
        let raw = -1.0 / 6.0;
        let b = bias_constant(Kernel::Uniform, 0, 1, HalfLine::Plus);
        assert!((b - raw / 2.0).abs() < 1e-14);
    }

    #[test]
    fn local_linear_bias_is_half_nu_bar() {
        for k in Kernel::ALL {
            let (nu, _) = nu_bar_kappa_bar(k);
            assert!((bias_constant(k, 0, 1, HalfLine::Plus) - nu / 2.0).abs() < 1e-13);
            assert!((jump_bias_factor(k, 0, 1) - nu / 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn minus_side_parity() {
        for k in Kernel::ALL {
            for p in 0..=4 {
                for v in 0..=p {
                    let plus = bias_constant(k, v, p, HalfLine::Plus);
                    let minus = bias_constant(k, v, p, HalfLine::Minus);
                    let sign = if (p + 1 - v) % 2 == 0 { 1.0 } else { -1.0 };
                    assert!(
                        (minus - sign * plus).abs() <= 1e-9 * plus.abs().max(1e-12),
                        "{k} v={v} p={p}: {plus} {minus}"
                    );
                }
            }
        }
        let j22 = bias_constant_jump(Kernel::Triangular, 2, 2);
        assert!((j22 - jump_bias_factor(Kernel::Triangular, 2, 2)).abs() < 1e-12);
        assert!(bias_constant_jump(Kernel::Triangular, 0, 1).abs() < 1e-14);
    }
}
