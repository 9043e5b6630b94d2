//! LoRa symbol modulation and the two equivalent non-coherent demodulators.
//!
//! Sampling is at the chip rate (`f_s = B`), so one symbol is `N = 2^SF`
//! complex samples.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SF: u32 = 4;
pub const MAX_SF: u32 = 12;

/// Spreading factor and derived symbol length `N = 2^SF`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct LoraParams {
    sf: u32,
    n: usize,
}

impl LoraParams {
    pub fn new(sf: u32) -> Result<Self> {
        if !(MIN_SF..=MAX_SF).contains(&sf) {
            return Err(Error::InvalidSpreadingFactor(sf));
        }
        Ok(Self { sf, n: 1usize << sf })
    }

    pub fn sf(&self) -> u32 {
        self.sf
    }

    /// Chips per symbol.
    pub fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn check_symbol(&self, s: usize) -> Result<()> {
        if s >= self.n {
            Err(Error::SymbolOutOfRange { symbol: s, n: self.n })
        } else {
            Ok(())
        }
    }
}

impl TryFrom<u32> for LoraParams {
    type Error = Error;
    fn try_from(sf: u32) -> Result<Self> {
        Self::new(sf)
    }
}

impl From<LoraParams> for u32 {
    fn from(p: LoraParams) -> u32 {
        p.sf
    }
}

impl fmt::Display for LoraParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SF{} (N={})", self.sf, self.n)
    }
}

/// Complex baseband samples, one symbol (`N`) or one frame (`F·N`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexSignal(pub Vec<Complex64>);

impl ComplexSignal {
    pub fn zeros(len: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    /// `Σ |x[n]|²`
    pub fn energy(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Multiply every sample by `g`.
    pub fn scaled(mut self, g: Complex64) -> Self {
        self.0.iter_mut().for_each(|z| *z *= g);
        self
    }
}

impl From<Vec<Complex64>> for ComplexSignal {
    fn from(v: Vec<Complex64>) -> Self {
        Self(v)
    }
}

impl Deref for ComplexSignal {
    type Target = [Complex64];
    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl DerefMut for ComplexSignal {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }
}

/// Detected symbol and the magnitudes of all candidate bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DemodResult {
    pub s_hat: usize,
    pub bin_magnitudes: Vec<f64>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Phase (in cycles, reduced to `[0, 1)`) of chip `k` of symbol `s`:
/// `k²/(2N) + (s/N - 1/2)k`. Evaluated in integers so it is exact.
pub(crate) fn symbol_phase_cycles(n: usize, s: usize, k: usize) -> f64 {
    let two_n = 2 * n as i128;
    let (k, s, n) = (k as i128, s as i128, n as i128);
    let num = (k * k + 2 * s * k - n * k).rem_euclid(two_n);
    num as f64 / two_n as f64
}

/// Phase (in cycles, reduced to `[0, 1)`) of symbol `s` evaluated at the
/// real-valued chip time `m`.
pub(crate) fn chirp_phase_cycles(n: usize, s: usize, m: f64) -> f64 {
    let nf = n as f64;
    let c = m * m / (2.0 * nf) + m * (s as f64 / nf - 0.5);
    c - c.floor()
}

pub(crate) fn cis_cycles(c: f64) -> Complex64 {
    let (sin, cos) = (TAU * c).sin_cos();
    Complex64::new(cos, sin)
}

/// Baseband LoRa symbol `x_s[k] = exp(j2π(k²/2N + (s/N − 1/2)k))`.
pub fn modulate(params: LoraParams, s: usize) -> Result<ComplexSignal> {
    params.check_symbol(s)?;
    let n = params.n();
    Ok((0..n).map(|k| cis_cycles(symbol_phase_cycles(n, s, k))).collect::<Vec<_>>().into())
}

/// The upchirp used for dechirping, identical to symbol 0.
pub fn reference_upchirp(params: LoraParams) -> ComplexSignal {
    modulate(params, 0).expect("symbol 0 is always valid")
}

fn check_len(params: LoraParams, y: &[Complex64]) -> Result<()> {
    if y.len() != params.n() {
        return Err(Error::LengthMismatch { expected: params.n(), actual: y.len() });
    }
    Ok(())
}

/// Dechirp with the conjugate reference upchirp, take the non-normalized
/// N-point DFT and pick the strongest bin.
pub fn demodulate_dft(params: LoraParams, y: &[Complex64]) -> Result<DemodResult> {
    check_len(params, y)?;
    let mut demod = Demodulator::new(params);
    let mut buf = y.to_vec();
    let mut mags = vec![0.0; params.n()];
    let s_hat = demod.demodulate_into(&mut buf, &mut mags);
    Ok(DemodResult { s_hat, bin_magnitudes: mags })
}

/// Correlate against every candidate symbol, `X_k = Σ y[n] x_k*[n]`. O(N²);
/// kept as the reference for [`demodulate_dft`].
pub fn demodulate_correlation(params: LoraParams, y: &[Complex64]) -> Result<DemodResult> {
    check_len(params, y)?;
    let n = params.n();
    let mags: Vec<f64> = (0..n)
        .map(|k| {
            y.iter()
                .enumerate()
                .map(|(i, &yi)| yi * cis_cycles(symbol_phase_cycles(n, k, i)).conj())
                .sum::<Complex64>()
                .norm()
        })
        .collect();
    Ok(DemodResult { s_hat: argmax_lowest(&mags), bin_magnitudes: mags })
}

/// Reusable FFT demodulator with a planned transform and cached reference.
pub struct Demodulator {
    params: LoraParams,
    fft: Arc<dyn Fft<f64>>,
    ref_conj: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Demodulator {
    pub fn new(params: LoraParams) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(params.n());
        let scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let ref_conj = reference_upchirp(params).iter().map(|z| z.conj()).collect();
        Self { params, fft, ref_conj, scratch }
    }

    pub fn params(&self) -> LoraParams {
        self.params
    }

    /// Demodulates `buf` in place (it holds the spectrum afterwards), writes
    /// `|Y_k|` into `mags` and returns the detected symbol.
    pub fn demodulate_into(&mut self, buf: &mut [Complex64], mags: &mut [f64]) -> usize {
        self.spectrum_in_place(buf);
        for (m, z) in mags.iter_mut().zip(buf.iter()) {
            *m = z.norm();
        }
        argmax_lowest(mags)
    }

    /// Demodulates `buf` in place and returns only the detected symbol.
    pub fn detect(&mut self, buf: &mut [Complex64]) -> usize {
        self.spectrum_in_place(buf);
        // |Y|² preserves the ordering and skips the square roots
        let mut best = 0;
        let mut best_v = buf[0].norm_sqr();
        for (i, z) in buf.iter().enumerate().skip(1) {
            let v = z.norm_sqr();
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        best
    }

    fn spectrum_in_place(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.params.n());
        for (z, r) in buf.iter_mut().zip(&self.ref_conj) {
            *z *= r;
        }
        self.fft.process_with_scratch(buf, &mut self.scratch);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(sf: u32) -> LoraParams {
        LoraParams::new(sf).unwrap()
    }

    #[test]
    fn params_range() {
        assert!(LoraParams::new(3).is_err());
        assert!(LoraParams::new(13).is_err());
        assert_eq!(p(7).n(), 128);
        assert_eq!(p(12).n(), 4096);
    }

    #[test]
    fn first_sample_is_one() {
        let x = modulate(p(7), 0).unwrap();
        assert!((x[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn upchirp_is_symbol_zero() {
        assert_eq!(reference_upchirp(p(7)), modulate(p(7), 0).unwrap());
        let r = reference_upchirp(p(8));
        let want = cis_cycles(1.0 / 512.0 - 0.5);
        assert!((r[1] - want).norm() < 1e-14);
        assert!(r.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn direct_formula_agrees_with_exact_phase() {
        let params = p(9);
        let n = params.n() as f64;
        let x = modulate(params, 301).unwrap();
        for (k, z) in x.iter().enumerate() {
            let k = k as f64;
            let want = Complex64::from_polar(1.0, TAU * (k * k / (2.0 * n) + (301.0 / n - 0.5) * k));
            assert!((z - want).norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_symbol_out_of_range() {
        assert!(matches!(modulate(p(7), 128), Err(Error::SymbolOutOfRange { .. })));
    }

    #[test]
    fn noiseless_symbol_concentrates_in_one_bin() {
        let params = p(7);
        let d = demodulate_dft(params, &modulate(params, 37).unwrap()).unwrap();
        assert_eq!(d.s_hat, 37);
        assert!((d.bin_magnitudes[37] - 128.0).abs() < 1e-9);
        for (k, m) in d.bin_magnitudes.iter().enumerate() {
            if k != 37 {
                assert!(*m < 1e-9, "bin {k}: {m}");
            }
        }
    }

    #[test]
    fn correlation_zero_symbol_coherent_sum() {
        let params = p(7);
        let d = demodulate_correlation(params, &modulate(params, 0).unwrap()).unwrap();
        assert!((d.bin_magnitudes[0] - 128.0).abs() < 1e-9);
    }

    #[test]
    fn global_phase_does_not_move_argmax() {
        let params = p(7);
        for &phi in &[0.3, 1.7, 3.1, 5.9] {
            let x = modulate(params, 5).unwrap().scaled(Complex64::from_polar(1.0, phi));
            assert_eq!(demodulate_dft(params, &x).unwrap().s_hat, 5);
        }
    }

    #[test]
    fn thousand_random_noiseless_symbols() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut errors = 0;
        for _ in 0..1000 {
            let sf = rng.gen_range(7..=12);
            let params = p(sf);
            let s = rng.gen_range(0..params.n());
            if demodulate_dft(params, &modulate(params, s).unwrap()).unwrap().s_hat != s {
                errors += 1;
            }
        }
        assert_eq!(errors, 0);
    }

    #[test]
    fn length_mismatch() {
        let y = vec![Complex64::new(1.0, 0.0); 100];
        assert!(matches!(demodulate_dft(p(7), &y), Err(Error::LengthMismatch { .. })));
        assert!(matches!(demodulate_correlation(p(7), &y), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_lowest(&[0.0, 0.0]), 0);
    }
}
