//! Scalar special functions: the standard normal distribution and the
//! folded-normal critical value used by bias-aware intervals.

#[allow(unused_imports)]
use num_traits::Float;

const SQRT_2: f64 = core::f64::consts::SQRT_2;

/// Standard normal CDF, computed through `erfc` so the lower tail keeps full
/// relative precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * core::f64::consts::PI).sqrt()
}

/// Standard normal quantile.
///
/// Acklam's rational approximation followed by two Newton steps on
/// `normal_cdf`, which brings the result to machine precision.
pub fn normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let plow = 0.02425;
    let mut x = if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    for _ in 0..2 {
        // Work on the smaller tail to avoid cancellation in cdf(x) - p.
        let (err, dens) = if x < 0.0 {
            (normal_cdf(x) - p, normal_pdf(x))
        } else {
            ((1.0 - p) - normal_cdf(-x), normal_pdf(x))
        };
        if dens > 0.0 {
            x -= err / dens;
        }
    }
    x
}

/// Coverage of the interval `[-q, q]` under `N(r, 1)`.
fn folded_coverage(q: f64, r: f64) -> f64 {
    // Phi(q - r) - Phi(-q - r), written with upper tails for accuracy.
    1.0 - normal_cdf(-(q - r)) - normal_cdf(-q - r)
}

/// The `1 - alpha` quantile of `|N(r, 1)|`; `z_crit(alpha, 0)` is the usual
/// two-sided normal critical value.
///
/// Solves `Phi(q - r) - Phi(-q - r) = 1 - alpha` by bisection on `[r, r + 10]`
/// to an absolute tolerance of `1e-12`.
pub fn z_crit(alpha: f64, r: f64) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    let r = r.abs();
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (r, r + 10.0);
    // Coverage at q = r is below 1/2 <= target for alpha < 1/2; widen otherwise.
    if folded_coverage(lo, r) >= target {
        lo = 0.0;
    }
    while folded_coverage(hi, r) < target {
        hi += 10.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if folded_coverage(mid, r) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Median of a slice (average of the middle pair for even lengths).
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v: alloc::vec::Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linear-interpolation quantile (R type 7) of already sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = prob * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * j as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-14);
        assert!((normal_cdf(-8.0) - 6.220960574271785e-16).abs() < 1e-28);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 1e-4, 0.01, 0.3, 0.5, 0.77, 0.975, 0.999999] {
            let q = normal_quantile(p);
            let back = normal_cdf(q);
            assert!((back - p).abs() / p.min(1.0 - p) < 1e-12, "p={p} q={q}");
        }
        assert!((normal_quantile(0.95) - 1.6448536269514722).abs() < 1e-13);
    }

    #[test]
    fn z_crit_at_zero_is_two_sided_quantile() {
        assert!((z_crit(0.05, 0.0) - 1.959963984540054).abs() < 1e-10);
        assert!((z_crit(0.10, 0.0) - 1.6448536269514722).abs() < 1e-10);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
