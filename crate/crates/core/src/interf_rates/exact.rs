//! Reference SER under interference by numerical integration over `y`, `ω`
//! and `τ`.
//!
//! Conditioned on the pattern and `ω`, bin `s` is Rice with location
//! `v_s = |N + |h_I| R_s e^{jω}|/σ` and bin `k ≠ s` is Rice with location
//! `|h_I||R_k|/σ`, all independent. The probability of a correct decision is
//! `∫ f_Ri(y; v_s) Π_{k≠s} F_Ri(y; v_k) dy`.
//!
//! Cost grows as `N³` times the `τ` nodes for the full sum and as `N²` for the
//! reduced one, so both are guarded to small spreading factors.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{ConditionalSer, SinrQuery};
use crate::error::{Error, Result};
use crate::pattern::{magnitudes_into, EquivalenceClassPair};
use crate::quadrature::gauss_legendre;
use crate::special::{rayleigh_log_cdf, rice_log_cdf, rice_pdf};

/// Largest spreading factor accepted by [`ser_full_small_n`].
pub const MAX_SF_FULL: u32 = 6;
/// Largest spreading factor accepted by [`ser_full_reduced`].
pub const MAX_SF_REDUCED: u32 = 8;

/// Gauss–Legendre nodes per unit chip of `τ` and per unit of `y`.
const GL_ORDER: usize = 8;
const OM_A: f64 = 2.0;
const OM_B: f64 = 6.0;
const Y_PANEL: f64 = 1.5;
/// Half-width of the `y` support around a Rice location, in noise stds.
const Y_MARGIN: f64 = 8.0;

/// Shared per-operating-point state of the conditional integrals.
struct Kernel {
    n: usize,
    /// Signal-bin location `N/σ`.
    a: f64,
    /// `|h_I|/σ`.
    hs: f64,
    rule: (Vec<f64>, Vec<f64>),
}

/// Scratch buffers reused across patterns.
#[derive(Default)]
struct Workspace {
    mags: Vec<f64>,
    b: Vec<f64>,
    ys: Vec<f64>,
    wy: Vec<f64>,
    /// `ln F_Ri(y_i; b_k)`, row-major by bin.
    log_f: Vec<f64>,
    log_all: Vec<f64>,
    v: Vec<f64>,
}

impl Kernel {
    fn new(q: &SinrQuery) -> Result<Self> {
        q.validate()?;
        if !q.snr_db.is_finite() {
            return Err(Error::InvalidParameter("exact evaluation needs a finite SNR".into()));
        }
        let sigma = q.sigma_bin();
        let n = q.params.n();
        Ok(Self { n, a: n as f64 / sigma, hs: q.h_i() / sigma, rule: gauss_legendre(GL_ORDER) })
    }

    /// Average over `s` and `ω` of the probability of a correct decision for
    /// the pattern held in `ws.mags`.
    fn mean_prob_correct(&self, ws: &mut Workspace) -> f64 {
        let n = self.n;
        let a = self.a;
        ws.b.clear();
        ws.b.extend(ws.mags.iter().map(|m| self.hs * m));
        let b_max = ws.b.iter().copied().fold(0.0, f64::max);

        let y_max = a + b_max + Y_MARGIN;
        let panels = (y_max / Y_PANEL).ceil() as usize;
        ws.ys.clear();
        ws.wy.clear();
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * Y_PANEL;
            for (x, w) in self.rule.0.iter().zip(&self.rule.1) {
                ws.ys.push(mid + 0.5 * Y_PANEL * x);
                ws.wy.push(0.5 * Y_PANEL * w);
            }
        }
        let ny = ws.ys.len();
        ws.log_f.resize(n * ny, 0.0);
        ws.log_all.clear();
        ws.log_all.resize(ny, 0.0);
        for k in 0..n {
            let b = ws.b[k];
            let row = &mut ws.log_f[k * ny..(k + 1) * ny];
            for (i, &y) in ws.ys.iter().enumerate() {
                row[i] = if b < 1e-12 {
                    rayleigh_log_cdf(y)
                } else if y > b + Y_MARGIN + 1.0 {
                    // the upper tail is below 1e-16 here
                    0.0
                } else if y < b - Y_MARGIN - 1.0 {
                    // ln F < −40 here; any such value zeroes the products it enters
                    -0.5 * (b - y) * (b - y)
                } else {
                    rice_log_cdf(y, b)
                };
                ws.log_all[i] += row[i];
            }
        }

        let mut total = 0.0;
        for s in 0..n {
            let b = ws.b[s];
            let lo = ((a - b).abs() - Y_MARGIN).max(0.0);
            let hi = a + b + Y_MARGIN;
            let w_count = omega_nodes(b);
            ws.v.clear();
            ws.v.extend((0..w_count).map(|j| {
                let om = PI * (j as f64 + 0.5) / w_count as f64;
                (a * a + b * b + 2.0 * a * b * om.cos()).max(0.0).sqrt()
            }));
            let row = &ws.log_f[s * ny..(s + 1) * ny];
            let mut acc = 0.0;
            #[allow(clippy::needless_range_loop)]
            for i in 0..ny {
                let y = ws.ys[i];
                if y < lo || y > hi {
                    continue;
                }
                let f_bar: f64 = ws.v.iter().map(|&v| rice_pdf(y, v)).sum::<f64>() / w_count as f64;
                if f_bar == 0.0 {
                    continue;
                }
                acc += ws.wy[i] * f_bar * (ws.log_all[i] - row[i]).exp();
            }
            total += acc;
        }
        total / n as f64
    }
}

/// Midpoint nodes on `[0, π]` for the `ω` average at interference location `b`.
fn omega_nodes(b: f64) -> usize {
    (OM_A * b + OM_B * b.sqrt()).ceil() as usize + 8
}

impl Workspace {
    fn load_pattern(&mut self, q: &SinrQuery, s_i1: usize, s_i2: usize, tau: f64) {
        self.mags.resize(q.params.n(), 0.0);
        magnitudes_into(q.params, s_i1, s_i2, tau, &mut self.mags);
    }
}

/// `(node, weight)` pairs of composite Gauss–Legendre on `[lo, hi)` with unit
/// panels; a shorter final panel absorbs the remainder.
fn tau_nodes(lo: f64, hi: f64, rule: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = lo;
    while start < hi - 1e-12 {
        let end = (start + 1.0).min(hi);
        let h = end - start;
        let mid = 0.5 * (start + end);
        for (x, w) in rule.0.iter().zip(&rule.1) {
            out.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
        start = end;
    }
    out
}

fn check_sf(q: &SinrQuery, max: u32) -> Result<()> {
    if q.params.sf() > max {
        return Err(Error::SpreadingFactorTooLarge { sf: q.params.sf(), max });
    }
    Ok(())
}

/// Error probability without interferer from the same kernel.
fn interference_free(kernel: &Kernel) -> f64 {
    let mut ws = Workspace { mags: vec![0.0; kernel.n], ..Default::default() };
    1.0 - kernel.mean_prob_correct(&mut ws)
}

/// Full reference SER: average over every `(s, s_I1, s_I2)`, `τ ∈ [0, N)` and
/// `ω ∈ [0, 2π)`.
pub fn ser_full_small_n(q: SinrQuery) -> Result<f64> {
    check_sf(&q, MAX_SF_FULL)?;
    let kernel = Kernel::new(&q)?;
    if q.sir_db.is_none() {
        return Ok(interference_free(&kernel));
    }
    let n = kernel.n;
    let nodes = tau_nodes(0.0, n as f64, &kernel.rule);
    let per_node: Vec<f64> = nodes
        .par_iter()
        .map_init(Workspace::default, |ws, &(tau, w)| {
            let mut sum = 0.0;
            for s1 in 0..n {
                for s2 in 0..n {
                    ws.load_pattern(&q, s1, s2, tau);
                    sum += kernel.mean_prob_correct(ws);
                }
            }
            w * sum / (n * n) as f64
        })
        .collect();
    let correct: f64 = per_node.iter().sum::<f64>() / n as f64;
    Ok((1.0 - correct).clamp(0.0, 1.0))
}

/// Mean probability of a correct decision over both pattern classes of
/// difference `s_I`, weighted by their cardinalities.
fn class_weighted(q: &SinrQuery, kernel: &Kernel, ws: &mut Workspace, s_i: usize, tau: f64) -> f64 {
    let n = kernel.n;
    let class = EquivalenceClassPair::new(n, s_i, 0);
    ws.load_pattern(q, s_i, 0, tau);
    let mut acc = class.card_y1 as f64 * kernel.mean_prob_correct(ws);
    if class.card_y2 > 0 {
        ws.load_pattern(q, 0, n - s_i, tau);
        acc += class.card_y2 as f64 * kernel.mean_prob_correct(ws);
    }
    acc / n as f64
}

/// Reduced reference SER: one sum over the difference class `s_I` with the
/// class cardinalities as weights, and the offset integral folded onto
/// `[0, (N−1)/2)` plus the tail `[N−1, N)`.
pub fn ser_full_reduced(q: SinrQuery) -> Result<f64> {
    check_sf(&q, MAX_SF_REDUCED)?;
    let kernel = Kernel::new(&q)?;
    if q.sir_db.is_none() {
        return Ok(interference_free(&kernel));
    }
    let n = kernel.n;
    let nf = n as f64;
    let mut nodes: Vec<(f64, f64)> =
        tau_nodes(0.0, (nf - 1.0) / 2.0, &kernel.rule).into_iter().map(|(t, w)| (t, 2.0 * w)).collect();
    nodes.extend(tau_nodes(nf - 1.0, nf, &kernel.rule));
    let per_node: Vec<f64> = nodes
        .par_iter()
        .map_init(Workspace::default, |ws, &(tau, w)| {
            let sum: f64 = (0..n).map(|s_i| class_weighted(&q, &kernel, ws, s_i, tau)).sum();
            w * sum / nf
        })
        .collect();
    let correct: f64 = per_node.iter().sum::<f64>() / nf;
    Ok((1.0 - correct).clamp(0.0, 1.0))
}

/// Chip-aligned reference: every `(s, s_I1, s_I2)` and every integer offset.
pub fn ser_integer_tau_direct(q: SinrQuery) -> Result<f64> {
    check_sf(&q, MAX_SF_FULL)?;
    let kernel = Kernel::new(&q)?;
    if q.sir_db.is_none() {
        return Ok(interference_free(&kernel));
    }
    let n = kernel.n;
    let per_l: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(Workspace::default, |ws, l| {
            let mut sum = 0.0;
            for s1 in 0..n {
                for s2 in 0..n {
                    ws.load_pattern(&q, s1, s2, l as f64);
                    sum += kernel.mean_prob_correct(ws);
                }
            }
            sum / (n * n) as f64
        })
        .collect();
    let correct = per_l.iter().sum::<f64>() / n as f64;
    Ok((1.0 - correct).clamp(0.0, 1.0))
}

/// Chip-aligned reduced form `1/(N·N/2) Σ_{s_I} Σ_{L=0}^{N/2−1}`; integral
/// offsets make both classes of a difference equivalent.
pub fn ser_integer_tau_reduced(q: SinrQuery) -> Result<f64> {
    check_sf(&q, MAX_SF_REDUCED)?;
    let kernel = Kernel::new(&q)?;
    if q.sir_db.is_none() {
        return Ok(interference_free(&kernel));
    }
    let n = kernel.n;
    let per_l: Vec<f64> = (0..n / 2)
        .into_par_iter()
        .map_init(Workspace::default, |ws, l| {
            let mut sum = 0.0;
            for s_i in 0..n {
                ws.load_pattern(&q, s_i, 0, l as f64);
                sum += kernel.mean_prob_correct(ws);
            }
            sum
        })
        .collect();
    let correct = per_l.iter().sum::<f64>() / (n * n / 2) as f64;
    Ok((1.0 - correct).clamp(0.0, 1.0))
}

/// SER conditioned on one interferer configuration, averaged over `s` and `ω`.
pub fn conditional_ser_exact(q: SinrQuery, s_i1: usize, s_i2: usize, tau: f64) -> Result<ConditionalSer> {
    q.params.check_symbol(s_i1)?;
    q.params.check_symbol(s_i2)?;
    crate::channel::check_tau(q.params, tau)?;
    let kernel = Kernel::new(&q)?;
    let mut ws = Workspace::default();
    if q.sir_db.is_some() {
        ws.load_pattern(&q, s_i1, s_i2, tau);
    } else {
        ws.mags = vec![0.0; kernel.n];
    }
    let value = (1.0 - kernel.mean_prob_correct(&mut ws)).clamp(0.0, 1.0);
    let s_i = EquivalenceClassPair::new(kernel.n, s_i1, s_i2).s_i;
    Ok(ConditionalSer { value, s_i, tau })
}
