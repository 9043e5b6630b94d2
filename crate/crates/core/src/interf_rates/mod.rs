//! Error rates under AWGN plus one same-SF interferer.
//!
//! The approximation treats the strongest interference bin as the only
//! competitor of the signal bin. It takes that bin's magnitude as
//! `|A_{k*,1}| + |A_{k*,2}|` with `k* = [s_I2 − ⌊τ⌉]_N` and `s_I2 = 0`, and
//! averages over the offsets `τ ∈ [0, (N−1)/2)` on a grid of step `ε`. The
//! exact reference paths live in [`exact`].

pub mod exact;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::awgn_rates::{ser_awgn_gaussian_approx, AwgnSerQuery};
use crate::error::{Error, Result};
use crate::pattern::peak_bin;
use crate::phy::LoraParams;
use crate::special::q_function;

pub use exact::{
    conditional_ser_exact, ser_full_reduced, ser_full_small_n, ser_integer_tau_direct, ser_integer_tau_reduced,
};

/// Default offset grid step for the approximation.
pub const DEFAULT_EPSILON: f64 = 0.2;

/// One operating point: SNR, optional SIR (`None` means no interferer), the
/// offset grid step and the frame length used by FER queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrQuery {
    pub params: LoraParams,
    pub snr_db: f64,
    pub sir_db: Option<f64>,
    pub epsilon: f64,
    pub frame_len: usize,
}

impl SinrQuery {
    pub fn new(params: LoraParams, snr_db: f64, sir_db: Option<f64>) -> Self {
        Self { params, snr_db, sir_db, epsilon: DEFAULT_EPSILON, frame_len: 1 }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_frame_len(mut self, frame_len: usize) -> Self {
        self.frame_len = frame_len;
        self
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr_db = snr_db;
        self
    }

    pub fn with_sir_db(mut self, sir_db: Option<f64>) -> Self {
        self.sir_db = sir_db;
        self
    }

    pub fn awgn(&self) -> AwgnSerQuery {
        AwgnSerQuery::new(self.params, self.snr_db)
    }

    /// Noise power per complex sample.
    pub fn n0(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    /// Per-component noise std of one DFT bin.
    pub fn sigma_bin(&self) -> f64 {
        (self.params.n() as f64 * self.n0() / 2.0).sqrt()
    }

    /// Interferer amplitude `|h_I|`, 0 without interferer.
    pub fn h_i(&self) -> f64 {
        self.sir_db.map_or(0.0, |s| 10f64.powf(-s / 20.0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.sir_db.is_some_and(f64::is_nan) {
            return Err(Error::InvalidParameter("SNR and SIR must not be NaN".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon {} outside (0, 1]", self.epsilon)));
        }
        if self.frame_len == 0 {
            return Err(Error::InvalidParameter("frame length must be at least 1".into()));
        }
        Ok(())
    }
}

/// A symbol error probability conditioned on the interferer class and offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSer {
    pub value: f64,
    /// Difference class `[s_I1 − s_I2]_N`.
    pub s_i: usize,
    pub tau: f64,
}

/// The offset grid `{ jε : jε < (N−1)/2 }`.
pub fn tau_grid(n: usize, epsilon: f64) -> Vec<f64> {
    let half = (n as f64 - 1.0) / 2.0;
    (0..).map(|j| j as f64 * epsilon).take_while(|&t| t < half).collect()
}

fn near_integer(tau: f64) -> bool {
    (tau - tau.round()).abs() < 1e-12
}

/// `|sin(m x)/sin(x)|` at `x = π arg/N`, with the limit `m` at the zeros of
/// `sin(x)` for integral offsets.
fn abs_sine_ratio(arg: f64, m: usize, n: usize, integral: bool) -> f64 {
    let x = PI * arg / n as f64;
    let den = x.sin();
    if den.abs() < 1e-12 && integral {
        return m as f64;
    }
    ((m as f64 * x).sin() / den).abs()
}

/// Approximate strongest interference magnitude `|A_{k*,1}| + |A_{k*,2}|`
/// for `s_I1 = s_i`, `s_I2 = 0`.
pub fn peak_magnitude_approx(params: LoraParams, s_i: usize, tau: f64) -> f64 {
    let n = params.n();
    let c = (tau.ceil() as usize).min(n);
    let k = peak_bin(params, 0, tau) as f64;
    let integral = near_integer(tau);
    let a2 = abs_sine_ratio(-k - tau, n - c, n, integral);
    let a1 = abs_sine_ratio(s_i as f64 - k - tau, c, n, integral);
    a1 + a2
}

/// `Q((N − |h_I| m)/sqrt(N·N0))`, including the noiseless limit.
fn q_term(n: f64, h: f64, m: f64, noise_scale: f64) -> f64 {
    let gap = n - h * m;
    if noise_scale == 0.0 {
        return if gap > 0.0 {
            0.0
        } else if gap < 0.0 {
            1.0
        } else {
            0.5
        };
    }
    let x = gap / noise_scale;
    if x > 38.5 {
        0.0
    } else {
        q_function(x)
    }
}

/// Steps between exact re-evaluations of the rotating phasors.
const RESEED: usize = 256;

/// `(1/N) Σ_{s_I} Q(...)` for one offset, with the `|A_{k*,1}|` sines over
/// `s_I` advanced by complex rotation.
fn conditional_interference(n: usize, tau: f64, h: f64, noise_scale: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    let c = (tau.ceil() as usize).min(n);
    let k = ((-((tau + 0.5).floor() as i64)).rem_euclid(n as i64)) as f64;
    let integral = near_integer(tau);
    let arg0 = -k - tau;
    let a2 = abs_sine_ratio(arg0, n - c, n, integral);
    let cf = c as f64;
    let step_den = Complex64::from_polar(1.0, PI / nf);
    let step_num = Complex64::from_polar(1.0, PI * cf / nf);
    let mut den = Complex64::new(1.0, 0.0);
    let mut num = Complex64::new(1.0, 0.0);
    let mut acc = 0.0;
    for s in 0..n {
        if s % RESEED == 0 {
            let x = PI * (s as f64 + arg0) / nf;
            den = Complex64::from_polar(1.0, x);
            num = Complex64::from_polar(1.0, cf * x);
        }
        let a1 = if den.im.abs() < 1e-12 && integral { cf } else { (num.im / den.im).abs() };
        acc += q_term(nf, h, a1 + a2, noise_scale);
        den *= step_den;
        num *= step_num;
    }
    acc / nf
}

fn noise_scale(q: &SinrQuery) -> f64 {
    if q.snr_db == f64::INFINITY {
        0.0
    } else {
        (q.params.n() as f64 * q.n0()).sqrt()
    }
}

/// Interference-only symbol error probability at offset `τ`.
pub fn ser_conditional_on_tau(q: SinrQuery, tau: f64) -> Result<f64> {
    q.validate()?;
    crate::channel::check_tau(q.params, tau)?;
    Ok(conditional_interference(q.params.n(), tau, q.h_i(), noise_scale(&q)))
}

/// Per-offset conditional probabilities on the grid, in grid order.
fn conditional_on_grid(q: &SinrQuery) -> Vec<f64> {
    let n = q.params.n();
    let h = q.h_i();
    let ns = noise_scale(q);
    tau_grid(n, q.epsilon).par_iter().map(|&t| conditional_interference(n, t, h, ns)).collect()
}

/// Interference-dominated SER, `(2ε/N) Σ_{τ∈𝒯} P(ŝ≠s|τ)`.
pub fn ser_interference_approx(q: SinrQuery) -> Result<f64> {
    q.validate()?;
    if q.sir_db.is_none() {
        return Ok(0.0);
    }
    let sum: f64 = conditional_on_grid(&q).iter().sum();
    Ok((2.0 * q.epsilon / q.params.n() as f64 * sum).min(1.0))
}

/// `P_N + (1 − P_N) P_I` with `P_N` from the Gaussian AWGN approximation.
pub fn ser_combined_approx(q: SinrQuery) -> Result<f64> {
    let p_i = ser_interference_approx(q)?;
    let p_n = awgn_gaussian(&q);
    Ok(combine(p_n, p_i))
}

fn awgn_gaussian(q: &SinrQuery) -> f64 {
    if q.snr_db == f64::INFINITY {
        0.0
    } else {
        ser_awgn_gaussian_approx(q.awgn())
    }
}

pub(crate) fn combine(p_n: f64, p_i: f64) -> f64 {
    p_n + (1.0 - p_n) * p_i
}

/// Frame error rate of an uncoded frame of `F = q.frame_len` symbols.
///
/// The interfering frame overlaps `F_i` symbols, uniform on `{1,…,F}`, all
/// with the same offset. An overlapped symbol is correct with probability
/// `(1 − P_N)(1 − P(ŝ≠s|τ))`, the others with `1 − P_N`. The offset average is
/// the mean over the grid.
pub fn fer_approx(q: SinrQuery) -> Result<f64> {
    q.validate()?;
    let f = q.frame_len;
    let ok_noise = (1.0 - awgn_gaussian(&q)).powi(f as i32);
    if q.sir_db.is_none() {
        return Ok(1.0 - ok_noise);
    }
    let cond = conditional_on_grid(&q);
    let mut mean_ok = 0.0;
    for p in &cond {
        let ok = 1.0 - p;
        // Σ_{F_i=1}^{F} ok^{F_i}
        let mut pow = 1.0;
        let mut s = 0.0;
        for _ in 0..f {
            pow *= ok;
            s += pow;
        }
        mean_ok += s / f as f64;
    }
    mean_ok /= cond.len() as f64;
    Ok((1.0 - ok_noise * mean_ok).clamp(0.0, 1.0))
}

/// Which analytic error rate a search inverts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ser,
    Fer,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Ser => "SER",
            Metric::Fer => "FER",
        }
    }

    /// The analytic approximation of this metric at `q`.
    pub fn approx(&self, q: SinrQuery) -> Result<f64> {
        match self {
            Metric::Ser => ser_combined_approx(q),
            Metric::Fer => fer_approx(q),
        }
    }
}

/// Bracket width at which [`required_snr`] stops, in dB.
pub const REQUIRED_SNR_TOL_DB: f64 = 0.01;

/// Smallest SNR in `[lo_db, hi_db]` at which the analytic metric reaches
/// `target`, to within [`REQUIRED_SNR_TOL_DB`].
///
/// The bracket shrinks by regula falsi with the Illinois modification,
/// interpolating `sqrt(−2 ln rate)` against the amplitude `10^(snr/20)`, where
/// Gaussian-tail curves are close to linear. A bisection step replaces it
/// whenever two steps fail to halve the bracket.
pub fn required_snr(q: SinrQuery, target: f64, metric: Metric, lo_db: f64, hi_db: f64) -> Result<f64> {
    q.validate()?;
    if !(target > 0.0 && target < 1.0) || lo_db.is_nan() || hi_db.is_nan() || lo_db >= hi_db {
        return Err(Error::InvalidParameter(format!("bad search: target {target}, range [{lo_db}, {hi_db}]")));
    }
    // a zero rate maps to −∞ and forces bisection
    let z = |rate: f64| (-2.0 * rate.ln()).max(0.0).sqrt();
    let z_target = z(target);
    let g = |snr: f64| -> Result<f64> { Ok(z_target - z(metric.approx(q.with_snr_db(snr))?)) };
    let amp = |db: f64| 10f64.powf(db / 20.0);
    let (mut lo, mut hi) = (lo_db, hi_db);
    let (mut g_lo, mut g_hi) = (g(lo)?, g(hi)?);
    if g_hi > 0.0 || g_lo <= 0.0 {
        return Err(Error::NotBracketed { target, lo_db, hi_db });
    }
    let tol = REQUIRED_SNR_TOL_DB;
    let mut widths = [f64::INFINITY; 2];
    let mut last_moved_lo: Option<bool> = None;
    while hi - lo > tol {
        let w = hi - lo;
        let x = if w > 0.5 * widths[0] || !g_lo.is_finite() || !g_hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            let (a_lo, a_hi) = (amp(lo), amp(hi));
            let a = a_hi - g_hi * (a_hi - a_lo) / (g_hi - g_lo);
            (20.0 * a.log10()).clamp(lo + 0.25 * tol, hi - 0.25 * tol)
        };
        widths = [widths[1], w];
        let gx = g(x)?;
        let moved_lo = gx > 0.0;
        if moved_lo {
            lo = x;
            g_lo = gx;
            if last_moved_lo == Some(true) {
                g_hi *= 0.5;
            }
        } else {
            hi = x;
            g_hi = gx;
            if last_moved_lo == Some(false) {
                g_lo *= 0.5;
            }
        }
        last_moved_lo = Some(moved_lo);
    }
    Ok(0.5 * (lo + hi))
}
