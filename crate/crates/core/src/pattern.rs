//! Closed-form interference patterns `|R_k|`, the magnitudes of the dechirped
//! interferer's DFT, and their equivalence classes.
//!
//! Two patterns are equivalent when they hold the same multiset of bin
//! magnitudes. For a fixed offset the pattern of `(s_I1, s_I2)` depends only on
//! the class of the pair under a common cyclic shift, and the offsets `τ` and
//! `(N−1)−τ` give equivalent patterns.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{check_tau, interferer_symbol_signal, InterfererState};
use crate::error::{Error, Result};
use crate::phy::{cis_cycles, reference_upchirp, LoraParams};

/// Below this the ratio of sines is replaced by its limit.
const SINGULAR_SIN: f64 = 1e-12;
const SINGULAR_TAU: f64 = 1e-12;

/// `sin(m·x)/sin(x)` with `x = π·arg/N`, using the limit `m·cos(m x0)/cos(x0)`
/// when `arg` is an integer multiple of `N` and `τ` is integral.
fn sine_ratio(arg: f64, m: usize, n: usize, tau_integral: bool) -> f64 {
    let x = PI * arg / n as f64;
    let den = x.sin();
    if den.abs() < SINGULAR_SIN && tau_integral {
        let x0 = PI * arg.round() / n as f64;
        let m = m as f64;
        return m * (m * x0).cos() / x0.cos();
    }
    (m as f64 * x).sin() / den
}

fn is_integral(tau: f64) -> bool {
    (tau - tau.round()).abs() < SINGULAR_TAU
}

/// Signed amplitude terms `(A_{k,1}, A_{k,2})` of bin `k`.
pub fn amplitude_terms(params: LoraParams, s_i1: usize, s_i2: usize, tau: f64, k: usize) -> (f64, f64) {
    let n = params.n();
    let c = (tau.ceil() as usize).min(n);
    let integral = is_integral(tau);
    let a1 = sine_ratio(s_i1 as f64 - k as f64 - tau, c, n, integral);
    let a2 = sine_ratio(s_i2 as f64 - k as f64 - tau, n - c, n, integral);
    (a1, a2)
}

/// Phase terms `(θ_{k,1}, θ_{k,2})` reduced to `[0, 2π)`.
///
/// Integer contributions are reduced modulo `2N` exactly before the
/// fractional contributions are added.
pub fn phase_terms(params: LoraParams, s_i1: usize, s_i2: usize, tau: f64, k: usize) -> (f64, f64) {
    let n = params.n() as i64;
    let two_n = 2 * n;
    let l = tau.floor() as i64;
    let lam = tau - tau.floor();
    let c = tau.ceil() as i64;
    let (s1, s2, k) = (s_i1 as i64, s_i2 as i64, k as i64);

    let i1 = (-l * l - l * n + s1 * (2 * l - c + 1) + k * (c - 1) + l * (c - 1)).rem_euclid(two_n);
    let f1 = -2.0 * l as f64 * lam - lam * lam + lam * n as f64 + 2.0 * s1 as f64 * lam + lam * (c - 1) as f64;
    let i2 = (-l * l + s2 * (2 * l - c + 1 - n) + k * (c - 1 + n) + l * (c - 1)).rem_euclid(two_n);
    let f2 = -2.0 * l as f64 * lam - lam * lam + 2.0 * s2 as f64 * lam + lam * (c - 1) as f64;

    let scale = PI / n as f64;
    let t1 = (i1 as f64 + f1).rem_euclid(two_n as f64) * scale;
    let t2 = (i2 as f64 + f2).rem_euclid(two_n as f64) * scale;
    (t1, t2)
}

/// `|R_k| = sqrt(A1² + A2² + 2 A1 A2 cos(θ1 − θ2))`, evaluated as
/// `|A1 + A2 e^{j(θ2−θ1)}|` so that near-empty bins keep absolute accuracy.
pub(crate) fn combine(a1: f64, a2: f64, t1: f64, t2: f64) -> f64 {
    let (sin, cos) = (t2 - t1).sin_cos();
    (a1 + a2 * cos).hypot(a2 * sin)
}

/// Magnitude of a single bin.
pub fn bin_magnitude(params: LoraParams, s_i1: usize, s_i2: usize, tau: f64, k: usize) -> f64 {
    let (a1, a2) = amplitude_terms(params, s_i1, s_i2, tau, k);
    let (t1, t2) = phase_terms(params, s_i1, s_i2, tau, k);
    combine(a1, a2, t1, t2)
}

/// Writes all `N` magnitudes into `out`. Inputs are not validated.
pub(crate) fn magnitudes_into(params: LoraParams, s_i1: usize, s_i2: usize, tau: f64, out: &mut [f64]) {
    for (k, m) in out.iter_mut().enumerate() {
        *m = bin_magnitude(params, s_i1, s_i2, tau, k);
    }
}

/// The `N` bin magnitudes for one `(s_I1, s_I2, τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferencePattern {
    pub magnitudes: Vec<f64>,
    pub s_i1: usize,
    pub s_i2: usize,
    pub tau: f64,
}

impl InterferencePattern {
    /// Magnitudes sorted in descending order, the canonical class encoding.
    pub fn sorted_desc(&self) -> Vec<f64> {
        let mut v = self.magnitudes.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    /// `Σ_k |R_k|²`, equal to `N²`.
    pub fn energy(&self) -> f64 {
        self.magnitudes.iter().map(|m| m * m).sum()
    }

    pub fn class(&self) -> EquivalenceClassPair {
        EquivalenceClassPair::new(self.magnitudes.len(), self.s_i1, self.s_i2)
    }

    /// Whether both patterns hold the same multiset of magnitudes within `tol`.
    pub fn equivalent_to(&self, other: &Self, tol: f64) -> bool {
        max_abs_diff(&self.sorted_desc(), &other.sorted_desc()) <= tol
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Closed-form pattern for one interferer configuration.
pub fn pattern_magnitudes(params: LoraParams, s_i1: usize, s_i2: usize, tau: f64) -> Result<InterferencePattern> {
    params.check_symbol(s_i1)?;
    params.check_symbol(s_i2)?;
    check_tau(params, tau)?;
    let mut magnitudes = vec![0.0; params.n()];
    magnitudes_into(params, s_i1, s_i2, tau, &mut magnitudes);
    Ok(InterferencePattern { magnitudes, s_i1, s_i2, tau })
}

/// Reference pattern by a direct `O(N²)` DFT of the synthesized, dechirped
/// interferer.
pub fn pattern_brute_force(params: LoraParams, s_i1: usize, s_i2: usize, tau: f64) -> Result<Vec<f64>> {
    let n = params.n();
    let x = interferer_symbol_signal(params, InterfererState::new(s_i1, s_i2, tau, 0.0))?;
    let r = reference_upchirp(params);
    let d: Vec<Complex64> = x.iter().zip(r.iter()).map(|(a, b)| a * b.conj()).collect();
    let twiddle: Vec<Complex64> = (0..n).map(|m| cis_cycles(-(m as f64) / n as f64)).collect();
    Ok((0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut idx = 0usize;
            for z in &d {
                acc += z * twiddle[idx];
                idx = (idx + k) % n;
            }
            acc.norm()
        })
        .collect())
}

/// Class of an ordered pair under a common cyclic shift, identified by the
/// difference `s_I = [s_I1 − s_I2]_N`.
///
/// Of the `N` shifts `δ`, `N − s_I` keep `s'_I1 ≥ s'_I2` and `s_I` do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceClassPair {
    pub s_i: usize,
    pub card_y1: usize,
    pub card_y2: usize,
}

impl EquivalenceClassPair {
    pub fn new(n: usize, s_i1: usize, s_i2: usize) -> Self {
        let s_i = (s_i1 + n - s_i2) % n;
        Self { s_i, card_y1: n - s_i, card_y2: s_i }
    }
}

/// Shifts both symbols by `δ` modulo `N`; the flag reports whether the
/// ordering `s'_I1 ≥ s'_I2` holds.
pub fn equivalence_shift(params: LoraParams, s_i1: usize, s_i2: usize, delta: usize) -> (usize, usize, bool) {
    let n = params.n();
    let a = (s_i1 + delta) % n;
    let b = (s_i2 + delta) % n;
    (a, b, a >= b)
}

/// Mirrored offset `(N−1) − τ`, defined on `[0, N−1)`.
pub fn mirror_offset(params: LoraParams, tau: f64) -> Result<f64> {
    let hi = params.n() as f64 - 1.0;
    if !(0.0..hi).contains(&tau) {
        return Err(Error::OffsetOutOfRange { tau, lo: 0.0, hi });
    }
    Ok(hi - tau)
}

/// Bin holding the strongest interference component, `[s_I2 − ⌊τ⌉]_N` with
/// halves rounded up.
pub fn peak_bin(params: LoraParams, s_i2: usize, tau: f64) -> usize {
    let n = params.n() as i64;
    let r = (tau + 0.5).floor() as i64;
    (s_i2 as i64 - r).rem_euclid(n) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(sf: u32) -> LoraParams {
        LoraParams::new(sf).unwrap()
    }

    #[test]
    fn lhopital_values() {
        let params = p(7);
        // integer τ = 3, bin [s_I1 − 3]_N
        let (a1, _) = amplitude_terms(params, 50, 9, 3.0, 47);
        assert!((a1 - 3.0).abs() < 1e-12);
        let (_, a2) = amplitude_terms(params, 50, 9, 3.0, 6);
        assert!((a2 - 125.0).abs() < 1e-12);
        // τ = 0 leaves only the second symbol, with amplitude N at its bin
        let (a1, a2) = amplitude_terms(params, 77, 21, 0.0, 21);
        assert_eq!(a1, 0.0);
        assert!((a2 - 128.0).abs() < 1e-12);
    }

    #[test]
    fn lhopital_sign_with_wrap() {
        // s_I1 − k − τ = −N: the limit carries the sign (−1)^(c−1)
        let params = p(4);
        let (a1, _) = amplitude_terms(params, 0, 0, 2.0, 14);
        let direct = pattern_brute_force(params, 0, 0, 2.0).unwrap();
        let closed = pattern_magnitudes(params, 0, 0, 2.0).unwrap();
        assert!((a1.abs() - 2.0).abs() < 1e-12);
        assert!(max_abs_diff(&direct, &closed.magnitudes) < 1e-9);
    }

    #[test]
    fn amplitude_matches_extended_evaluation() {
        let params = p(7);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let (s1, s2, k) = (rng.gen_range(0..128usize), rng.gen_range(0..128usize), rng.gen_range(0..128usize));
            let tau: f64 = rng.gen_range(0.0..128.0);
            let c = tau.ceil() as usize;
            // geometric sums evaluated term by term
            let g = |s: usize, lo: usize, hi: usize| -> f64 {
                let x = 2.0 * PI * (s as f64 - k as f64 - tau) / 128.0;
                let z: Complex64 = (lo..hi).map(|m| Complex64::from_polar(1.0, x * m as f64)).sum();
                z.norm()
            };
            let (a1, a2) = amplitude_terms(params, s1, s2, tau, k);
            assert!((a1.abs() - g(s1, 0, c)).abs() < 1e-9);
            assert!((a2.abs() - g(s2, c, 128)).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for sf in 4..=8 {
            let params = p(sf);
            let n = params.n();
            for _ in 0..60 {
                let (s1, s2) = (rng.gen_range(0..n), rng.gen_range(0..n));
                let tau = if rng.gen_bool(0.2) { rng.gen_range(0..n) as f64 } else { rng.gen_range(0.0..n as f64) };
                let closed = pattern_magnitudes(params, s1, s2, tau).unwrap();
                let brute = pattern_brute_force(params, s1, s2, tau).unwrap();
                let d = max_abs_diff(&closed.magnitudes, &brute);
                assert!(d < 1e-6, "sf {sf} ({s1},{s2},{tau}): {d}");
            }
        }
    }

    #[test]
    fn equal_symbols_integer_offset_single_bin() {
        let params = p(7);
        let pat = pattern_magnitudes(params, 10, 10, 4.0).unwrap();
        assert!((pat.magnitudes[6] - 128.0).abs() < 1e-9);
        let rest = pat.magnitudes.iter().enumerate().filter(|(k, _)| *k != 6).map(|(_, m)| *m).fold(0.0, f64::max);
        assert!(rest < 1e-9);
    }

    #[test]
    fn peak_bin_is_strongest_for_equal_symbols() {
        let params = p(8);
        for &tau in &[0.0, 0.4, 0.5, 12.49, 12.51, 200.2] {
            let pat = pattern_magnitudes(params, 30, 30, tau).unwrap();
            let k = peak_bin(params, 30, tau);
            let best = crate::phy::argmax_lowest(&pat.magnitudes);
            assert!((pat.magnitudes[k] - pat.magnitudes[best]).abs() < 1e-9, "τ = {tau}");
        }
    }

    #[test]
    fn shift_cardinalities() {
        let params = p(7);
        assert_eq!(equivalence_shift(params, 5, 2, 0), (5, 2, true));
        let same = (0..128).filter(|&d| equivalence_shift(params, 5, 2, d).2).count();
        assert_eq!(same, 125);
        let class = EquivalenceClassPair::new(128, 5, 2);
        assert_eq!((class.card_y1, class.card_y2), (125, 3));
    }

    #[test]
    fn mirror_offset_bounds() {
        let params = p(7);
        assert_eq!(mirror_offset(params, 10.25).unwrap(), 116.75);
        assert_eq!(mirror_offset(params, 63.5).unwrap(), 63.5);
        assert!(mirror_offset(params, 127.0).is_err());
        assert!(mirror_offset(params, -1.0).is_err());
    }

    #[test]
    fn mirror_pair_example() {
        let params = p(7);
        let a = pattern_magnitudes(params, 40, 10, 10.25).unwrap();
        let b = pattern_magnitudes(params, 40, 10, 116.75).unwrap();
        assert!(a.equivalent_to(&b, 1e-6));
    }

    #[test]
    fn mirror_exhaustive_sf4() {
        let params = p(4);
        for j in 0..300 {
            let tau = j as f64 * 0.05;
            let m = mirror_offset(params, tau).unwrap();
            for s_i in 0..16 {
                let a = pattern_magnitudes(params, s_i, 0, tau).unwrap();
                let b = pattern_magnitudes(params, s_i, 0, m).unwrap();
                assert!(a.equivalent_to(&b, 1e-9), "τ = {tau}, s_I = {s_i}");
            }
        }
    }

    /// Sign of `A'` relative to `A` after shifting by `δ`: each wrap of the
    /// symbol or the bin contributes `(−1)^(⌈τ⌉+1)`.
    fn wrap_sign(c: usize, wraps: usize) -> f64 {
        if (c + 1) * wraps % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn energy_is_n_squared(sf in 4u32..=9, a in 0.0f64..1.0, b in 0.0f64..1.0, t in 0.0f64..1.0) {
            let params = p(sf);
            let n = params.n();
            let (s1, s2) = ((a * n as f64) as usize, (b * n as f64) as usize);
            let pat = pattern_magnitudes(params, s1, s2, t * n as f64).unwrap();
            let nn = (n * n) as f64;
            prop_assert!(((pat.energy() - nn) / nn).abs() < 1e-6);
            prop_assert!(pat.magnitudes.iter().all(|&m| m <= n as f64 + 1e-9));
        }

        #[test]
        fn class_shift_preserves_sorted_pattern(s1 in 0usize..128, s2 in 0usize..128, tau in 0.0f64..128.0, d in 0usize..128) {
            let params = p(7);
            let (s1, s2) = (s1.max(s2), s1.min(s2));
            let base = pattern_magnitudes(params, s1, s2, tau).unwrap();
            let (a, b, same) = equivalence_shift(params, s1, s2, d);
            let shifted = pattern_magnitudes(params, a, b, tau).unwrap();
            if same {
                prop_assert!(base.equivalent_to(&shifted, 1e-9));
            }
            let lam = tau - tau.floor();
            if lam == 0.0 {
                prop_assert!(base.equivalent_to(&shifted, 1e-9));
            }
        }

        #[test]
        fn amplitude_sign_under_shift(s1 in 0usize..64, s2 in 0usize..64, tau in 0.0f64..64.0, d in 0usize..64, k in 0usize..64) {
            let params = p(6);
            let n = 64;
            let c = tau.ceil() as usize;
            let (a, b, _) = equivalence_shift(params, s1, s2, d);
            let k2 = (k + d) % n;
            let wk = usize::from(k + d >= n);
            let (a1, a2) = amplitude_terms(params, s1, s2, tau, k);
            let (b1, b2) = amplitude_terms(params, a, b, tau, k2);
            let w1 = usize::from(s1 + d >= n) + wk;
            let w2 = usize::from(s2 + d >= n) + wk;
            prop_assert!((b1 - wrap_sign(c, w1) * a1).abs() < 1e-9);
            prop_assert!((b2 - wrap_sign(c, w2) * a2).abs() < 1e-9);
        }

        #[test]
        fn cross_term_under_wrapping_shift(s1 in 0usize..64, s2 in 0usize..64, tau in 0.0f64..64.0, k in 0usize..64) {
            let params = p(6);
            let n = 64;
            let (s1, s2) = (s1.max(s2), s1.min(s2));
            prop_assume!(s1 > s2);
            // smallest shift that wraps s_I1 but not s_I2
            let d = n - s1;
            let (a, b, same) = equivalence_shift(params, s1, s2, d);
            prop_assert!(!same);
            let k2 = (k + d) % n;
            let lam = tau - tau.floor();
            let (a1, a2) = amplitude_terms(params, s1, s2, tau, k);
            let (t1, t2) = phase_terms(params, s1, s2, tau, k);
            let (b1, b2) = amplitude_terms(params, a, b, tau, k2);
            let (u1, u2) = phase_terms(params, a, b, tau, k2);
            let lhs = b1 * b2 * (u1 - u2).cos();
            let rhs = a1 * a2 * (t1 - t2 - 2.0 * lam * PI).cos();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + a1.abs() * a2.abs()));
        }
    }

    #[test]
    fn classes_differ_for_fractional_offsets() {
        let params = p(7);
        let y1 = pattern_magnitudes(params, 40, 10, 17.3).unwrap();
        let y2 = pattern_magnitudes(params, 10, 108, 17.3).unwrap();
        assert!(!y1.equivalent_to(&y2, 1e-6));
        let z1 = pattern_magnitudes(params, 40, 10, 17.0).unwrap();
        let z2 = pattern_magnitudes(params, 10, 108, 17.0).unwrap();
        assert!(z1.equivalent_to(&z2, 1e-9));
    }
}
