//! Special functions: Gaussian Q, harmonic numbers, exponentially scaled
//! modified Bessel functions, and the Rice/Rayleigh distributions with unit
//! scale (Marcum Q of order one).

use std::f64::consts::{PI, SQRT_2};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `H_n = 1 + 1/2 + ... + 1/n`, summed smallest term first.
pub fn harmonic_number(n: u64) -> f64 {
    (1..=n).rev().map(|k| 1.0 / k as f64).sum()
}

/// `I_0(x) e^{-|x|}`.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= 30.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        // Hankel expansion; the smallest term at x > 30 is far below 1e-17.
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            let m = 2.0 * k - 1.0;
            term *= m * m / (8.0 * k * x);
            if term < 1e-17 * sum {
                break;
            }
            sum += term;
            k += 1.0;
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

/// Starting order for Miller's backward recurrence such that
/// `I_K(x) / I_0(x)` is below double precision.
fn miller_start(x: f64) -> usize {
    let base = 32.0 + 10.0 * x.sqrt();
    let extra = if x < 50.0 { x } else { 0.0 };
    (base + extra).ceil() as usize
}

/// Weighted sums of `e_k(x) = I_k(x) e^{-x}` by Miller's algorithm, normalized
/// with `e_0 + 2 Σ_{k≥1} e_k = 1`.
///
/// Returns `(Σ_{k≥0} ρ^k e_k, Σ_{k≥1} ρ^k e_k)`.
fn scaled_bessel_sums(x: f64, rho: f64) -> (f64, f64) {
    if x < 1e-12 {
        let e0 = (-x).exp() * (1.0 + 0.25 * x * x);
        let tail = rho * 0.5 * x;
        return (e0 + tail, tail);
    }
    let k_top = miller_start(x);
    let two_over_x = 2.0 / x;
    let mut i_above = 0.0;
    let mut i_k = 1.0;
    let mut norm = 0.0;
    let mut acc = 0.0;
    for k in (1..=k_top).rev() {
        norm += 2.0 * i_k;
        acc = i_k + rho * acc;
        let i_below = i_above + (k as f64) * two_over_x * i_k;
        i_above = i_k;
        i_k = i_below;
        if i_k > 1e250 {
            i_k *= 1e-250;
            i_above *= 1e-250;
            norm *= 1e-250;
            acc *= 1e-250;
        }
    }
    norm += i_k;
    let e0 = i_k / norm;
    let tail = rho * acc / norm;
    (e0 + tail, tail)
}

/// Lower and upper tail of the unit-scale Rice distribution with location
/// `v` at `y`, i.e. `(1 - Q_1(v, y), Q_1(v, y))`.
///
/// The smaller tail is summed directly from a positive series, so it keeps
/// full relative precision; the other is its complement.
#[derive(Debug, Clone, Copy)]
struct RiceTails {
    lower: f64,
    upper: f64,
}

fn rice_tails(y: f64, v: f64) -> RiceTails {
    if y <= 0.0 {
        return RiceTails { lower: 0.0, upper: 1.0 };
    }
    if v <= 0.0 {
        let upper = (-0.5 * y * y).exp();
        let lower = -(-0.5 * y * y).exp_m1();
        return RiceTails { lower, upper };
    }
    let x = v * y;
    if y > v {
        // Q_1(v, y) = e^{-(y-v)^2/2} Σ_{k≥0} (v/y)^k e_k(vy)
        let (sum, _) = scaled_bessel_sums(x, v / y);
        let upper = (-0.5 * (y - v) * (y - v)).exp() * sum;
        let upper = upper.min(1.0);
        RiceTails { lower: 1.0 - upper, upper }
    } else {
        // 1 - Q_1(v, y) = e^{-(v-y)^2/2} Σ_{k≥1} (y/v)^k e_k(vy)
        let (_, tail) = scaled_bessel_sums(x, y / v);
        let lower = ((-0.5 * (v - y) * (v - y)).exp() * tail).min(1.0);
        RiceTails { lower, upper: 1.0 - lower }
    }
}

/// Marcum Q function of order one.
pub fn marcum_q1(a: f64, b: f64) -> f64 {
    rice_tails(b, a).upper
}

/// PDF of the Rice distribution with location `v` and unit scale.
pub fn rice_pdf(y: f64, v: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let d = y - v;
    y * (-0.5 * d * d).exp() * bessel_i0e(y * v)
}

/// CDF of the Rice distribution with location `v` and unit scale.
pub fn rice_cdf(y: f64, v: f64) -> f64 {
    rice_tails(y, v).lower
}

/// Survival function `1 - F_Ri(y; v, 1) = Q_1(v, y)`.
pub fn rice_sf(y: f64, v: f64) -> f64 {
    rice_tails(y, v).upper
}

/// `ln F_Ri(y; v, 1)`, accurate both deep in the lower tail and where the
/// CDF is within rounding of one.
pub fn rice_log_cdf(y: f64, v: f64) -> f64 {
    if y <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if v <= 0.0 {
        return rayleigh_log_cdf(y);
    }
    let x = v * y;
    if y > v {
        let (sum, _) = scaled_bessel_sums(x, v / y);
        let upper = (-0.5 * (y - v) * (y - v)).exp() * sum;
        (-upper.min(1.0)).ln_1p()
    } else {
        let (_, tail) = scaled_bessel_sums(x, y / v);
        if tail <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (-0.5 * (v - y) * (v - y) + tail.ln()).min(0.0)
    }
}

/// Unit-scale Rayleigh PDF.
pub fn rayleigh_pdf(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        y * (-0.5 * y * y).exp()
    }
}

/// Unit-scale Rayleigh CDF.
pub fn rayleigh_cdf(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        -(-0.5 * y * y).exp_m1()
    }
}

/// `ln F_Ra(y; 1)`.
pub fn rayleigh_log_cdf(y: f64) -> f64 {
    if y <= 0.0 {
        f64::NEG_INFINITY
    } else if y < 1.2 {
        (-(-0.5 * y * y).exp_m1()).ln()
    } else {
        (-(-0.5 * y * y).exp()).ln_1p()
    }
}
