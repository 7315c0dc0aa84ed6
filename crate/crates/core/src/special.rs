//! Inverse error function and the standard normal quantile.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 60;

/// Standard normal CDF, evaluated through `erfc` so the lower tail keeps
/// full relative precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

// Acklam's rational approximation, relative error ~1e-9. Used only as the
// Newton starting point.
fn quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.38357751867269e2,
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
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -quantile_guess(1.0 - p)
    }
}

/// Quantile of the standard normal law for `p ∈ (0, 1/2]`, refined by
/// Newton iteration on the CDF until the step falls below `1e-14`.
fn lower_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 0.5);
    if p == 0.5 {
        return 0.0;
    }
    let mut x = quantile_guess(p);
    for _ in 0..NEWTON_MAX_ITER {
        let step = (normal_cdf(x) - p) / normal_pdf(x);
        x -= step;
        if step.abs() < NEWTON_TOL {
            break;
        }
    }
    x
}

/// Standard normal quantile `Φ⁻¹(p) = √2 erf⁻¹(2p − 1)`.
///
/// Returns `±∞` at the endpoints and NaN outside `[0, 1]`.
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
    if p <= 0.5 {
        lower_quantile(p)
    } else {
        -lower_quantile(1.0 - p)
    }
}

/// Quantile of the grid point `i/(n+1)`, computed from the exact integer
/// complement in the upper half so the grid is antisymmetric to the bit.
pub fn normal_grid_quantile(i: usize, n: usize) -> f64 {
    debug_assert!(i >= 1 && i <= n);
    let denom = (n + 1) as f64;
    let lo = i.min(n + 1 - i);
    if 2 * lo == n + 1 {
        return 0.0;
    }
    let x = lower_quantile(lo as f64 / denom);
    if lo == i {
        x
    } else {
        -x
    }
}

/// Inverse error function on `(-1, 1)`.
pub fn erf_inv(y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    normal_quantile(0.5 * (1.0 + y)) / SQRT_2
}
