//! Received-signal synthesis: the signal of interest, at most one same-SF
//! interferer with a real-valued chip offset, and circular AWGN.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{chirp_phase_cycles, cis_cycles, modulate, symbol_phase_cycles, ComplexSignal, LoraParams};

/// Link power levels. `None` disables the corresponding impairment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelParams {
    /// `SNR = 1/N0` in dB, signal power per complex sample over noise power.
    pub snr_db: Option<f64>,
    /// `SIR = 1/P_I` in dB.
    pub sir_db: Option<f64>,
}

impl ChannelParams {
    pub fn new(snr_db: Option<f64>, sir_db: Option<f64>) -> Self {
        Self { snr_db, sir_db }
    }

    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn interferer_present(&self) -> bool {
        self.sir_db.is_some()
    }

    /// Total noise power per complex sample, `N0 = 10^(-SNR/10)`; 0 when disabled.
    pub fn n0(&self) -> f64 {
        self.snr_db.map_or(0.0, db_to_power_inv)
    }

    /// Per-component noise standard deviation of one time-domain sample.
    pub fn noise_std(&self) -> f64 {
        (0.5 * self.n0()).sqrt()
    }

    /// Interference power `P_I = 10^(-SIR/10)`; 0 when disabled.
    pub fn interference_power(&self) -> f64 {
        self.sir_db.map_or(0.0, db_to_power_inv)
    }

    /// `|h_I| = sqrt(P_I)`.
    pub fn interferer_amplitude(&self) -> f64 {
        self.interference_power().sqrt()
    }
}

fn db_to_power_inv(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// One interfering symbol pair as seen by a single symbol of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfererState {
    /// Symbol occupying the first `⌈τ⌉` chips.
    pub s_i1: usize,
    /// Symbol starting at chip time `τ`.
    pub s_i2: usize,
    /// Offset in chips, `0 ≤ τ < N`.
    pub tau: f64,
    /// Relative phase `ω = φ − θ` in radians.
    pub omega: f64,
}

impl InterfererState {
    pub fn new(s_i1: usize, s_i2: usize, tau: f64, omega: f64) -> Self {
        Self { s_i1, s_i2, tau, omega }
    }

    /// Integer part `L` of the offset.
    pub fn l(&self) -> usize {
        self.tau.floor() as usize
    }

    /// Fractional part `λ` of the offset.
    pub fn lambda(&self) -> f64 {
        self.tau - self.tau.floor()
    }

    /// Number of chips carrying `s_i1`, `⌈τ⌉`.
    pub fn ceil_tau(&self) -> usize {
        self.tau.ceil() as usize
    }

    pub(crate) fn validate(&self, params: LoraParams) -> Result<()> {
        params.check_symbol(self.s_i1)?;
        params.check_symbol(self.s_i2)?;
        check_tau(params, self.tau)
    }
}

pub(crate) fn check_tau(params: LoraParams, tau: f64) -> Result<()> {
    let hi = params.n() as f64;
    if !(0.0..hi).contains(&tau) {
        return Err(Error::OffsetOutOfRange { tau, lo: 0.0, hi });
    }
    Ok(())
}

/// Unit-amplitude interferer samples over one symbol of interest:
/// `x_{s_I1}(n + N − τ)` for `n < ⌈τ⌉`, `x_{s_I2}(n − τ)` otherwise.
pub fn interferer_symbol_signal(params: LoraParams, st: InterfererState) -> Result<ComplexSignal> {
    st.validate(params)?;
    let mut out = ComplexSignal::zeros(params.n());
    add_interferer(params.n(), st.s_i1, st.s_i2, st.tau, Complex64::new(1.0, 0.0), &mut out);
    Ok(out)
}

/// `out[n] += gain · x_I[n]`.
pub(crate) fn add_interferer(n: usize, s_i1: usize, s_i2: usize, tau: f64, gain: Complex64, out: &mut [Complex64]) {
    let c = (tau.ceil() as usize).min(n);
    let nf = n as f64;
    for (i, z) in out.iter_mut().enumerate() {
        let (s, m) = if i < c { (s_i1, i as f64 + nf - tau) } else { (s_i2, i as f64 - tau) };
        *z += gain * cis_cycles(chirp_phase_cycles(n, s, m));
    }
}

/// `out[n] += z[n]`, circular Gaussian with per-component std `std`.
pub(crate) fn add_noise<R: Rng + ?Sized>(rng: &mut R, std: f64, out: &mut [Complex64]) {
    for z in out.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z += Complex64::new(std * re, std * im);
    }
}

/// Table-driven symbol generator: `x_s[k] = x_0[k] · e^{j2π sk/N}`.
#[derive(Debug, Clone)]
pub(crate) struct SymbolTable {
    upchirp: Vec<Complex64>,
    roots: Vec<Complex64>,
}

impl SymbolTable {
    pub fn new(params: LoraParams) -> Self {
        let n = params.n();
        let upchirp = (0..n).map(|k| cis_cycles(symbol_phase_cycles(n, 0, k))).collect();
        let roots = (0..n).map(|k| cis_cycles(k as f64 / n as f64)).collect();
        Self { upchirp, roots }
    }

    /// `out[k] = gain · x_s[k]`.
    pub fn write_symbol(&self, s: usize, gain: Complex64, out: &mut [Complex64]) {
        let n = self.roots.len();
        let mut idx = 0usize;
        for (k, z) in out.iter_mut().enumerate() {
            *z = gain * self.upchirp[k] * self.roots[idx];
            idx += s;
            if idx >= n {
                idx -= n;
            }
        }
    }

    /// `out[k] += gain · x_I[k]`, same samples as [`add_interferer`].
    ///
    /// Uses `x_s(k + d) = x_s[k] e^{j2π(dk/N + d²/2N + d(s/N − 1/2))}` with
    /// `d = N − τ` before `⌈τ⌉` and `d = −τ` after; both share the tone
    /// `e^{−j2πτk/N}`.
    pub fn add_interferer(&self, s_i1: usize, s_i2: usize, tau: f64, gain: Complex64, out: &mut [Complex64]) {
        let n = self.roots.len();
        let nf = n as f64;
        let c = (tau.ceil() as usize).min(n);
        let g1 = gain * cis_cycles(chirp_phase_cycles(n, s_i1, nf - tau));
        let g2 = gain * cis_cycles(chirp_phase_cycles(n, s_i2, -tau));
        let step = cis_cycles(-tau / nf);
        let mut tone = Complex64::new(1.0, 0.0);
        for (k, z) in out.iter_mut().enumerate() {
            if k % TONE_RESEED == 0 {
                tone = cis_cycles((-tau * k as f64 / nf).rem_euclid(1.0));
            }
            let (s, g) = if k < c { (s_i1, g1) } else { (s_i2, g2) };
            *z += g * self.upchirp[k] * self.roots[(s * k) % n] * tone;
            tone *= step;
        }
    }
}

/// Steps between exact re-evaluations of the rotating tone.
const TONE_RESEED: usize = 128;

/// `e^{jφ} x_s + |h_I| e^{j(φ−ω)} x_I + z` for one symbol.
pub fn received_symbol<R: Rng + ?Sized>(
    params: LoraParams,
    ch: ChannelParams,
    s: usize,
    st: InterfererState,
    phi: f64,
    rng: &mut R,
) -> Result<ComplexSignal> {
    let mut y = modulate(params, s)?.scaled(Complex64::from_polar(1.0, phi));
    if ch.interferer_present() {
        st.validate(params)?;
        let gain = Complex64::from_polar(ch.interferer_amplitude(), phi - st.omega);
        add_interferer(params.n(), st.s_i1, st.s_i2, st.tau, gain, &mut y);
    }
    if ch.snr_db.is_some() {
        add_noise(rng, ch.noise_std(), &mut y);
    }
    Ok(y)
}

/// An interfering frame placed `offset` chips after the start of the frame of
/// interest.
///
/// The symbol of interest at index `⌊offset/N⌋` is the first one overlapped;
/// its first `⌈offset mod N⌉` chips carry the tail of `lead_in`, so every
/// overlapped symbol sees a complete `(s_I1, s_I2)` pair with the same `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferingFrame {
    pub offset: f64,
    pub lead_in: usize,
    pub symbols: Vec<usize>,
}

impl InterferingFrame {
    /// Offset within a symbol, `τ = offset mod N`.
    pub fn tau(&self, n: usize) -> f64 {
        self.offset % n as f64
    }

    /// Index of the first overlapped symbol of interest.
    pub fn first_symbol(&self, n: usize) -> usize {
        (self.offset / n as f64).floor() as usize
    }

    /// Symbol pair seen by symbol of interest `q`, if it is overlapped.
    pub fn pair_for(&self, n: usize, q: usize) -> Option<(usize, usize)> {
        let q0 = self.first_symbol(n);
        if q < q0 {
            return None;
        }
        let i = q - q0;
        let s_i1 = if i == 0 { self.lead_in } else { self.symbols[i - 1] };
        Some((s_i1, self.symbols[i]))
    }
}

/// Number of symbols of a length-`frame_len` frame touched by an interfering
/// frame starting `offset` chips later; a partially covered symbol counts.
pub fn interfered_symbols(n: usize, frame_len: usize, offset: f64) -> usize {
    frame_len - (offset / n as f64).floor() as usize
}

/// Frame of `F` symbols with an optional overlapping interfering frame and
/// AWGN over the whole frame. The interferer uses one `ω` for the frame.
pub fn received_frame<R: Rng + ?Sized>(
    params: LoraParams,
    ch: ChannelParams,
    symbols: &[usize],
    interferer: &InterferingFrame,
    omega: f64,
    phi: f64,
    rng: &mut R,
) -> Result<ComplexSignal> {
    let n = params.n();
    let f = symbols.len();
    if f == 0 {
        return Err(Error::InvalidParameter("frame must contain at least one symbol".into()));
    }
    if interferer.symbols.len() != f {
        return Err(Error::LengthMismatch { expected: f, actual: interferer.symbols.len() });
    }
    let span = (f * n) as f64;
    if !(0.0..span).contains(&interferer.offset) {
        return Err(Error::OffsetOutOfRange { tau: interferer.offset, lo: 0.0, hi: span });
    }
    params.check_symbol(interferer.lead_in)?;
    for &s in symbols.iter().chain(&interferer.symbols) {
        params.check_symbol(s)?;
    }
    let table = SymbolTable::new(params);
    let rot = Complex64::from_polar(1.0, phi);
    let gain_i = Complex64::from_polar(ch.interferer_amplitude(), phi - omega);
    let tau = interferer.tau(n);
    let mut y = ComplexSignal::zeros(f * n);
    for (q, chunk) in y.chunks_mut(n).enumerate() {
        table.write_symbol(symbols[q], rot, chunk);
        if ch.interferer_present() {
            if let Some((s_i1, s_i2)) = interferer.pair_for(n, q) {
                table.add_interferer(s_i1, s_i2, tau, gain_i, chunk);
            }
        }
    }
    if ch.snr_db.is_some() {
        add_noise(rng, ch.noise_std(), &mut y);
    }
    Ok(y)
}

/// Uniform `[0, 2π)` phase.
pub(crate) fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen::<f64>() * TAU
}
