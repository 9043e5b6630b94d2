//! Monte Carlo estimation of symbol and frame error rates.
//!
//! Trial `t` draws from its own ChaCha8 stream `(seed, t)`, so estimates do
//! not depend on the thread count or on scheduling. Trials run in blocks;
//! outcomes of a block are reduced in trial order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{add_noise, uniform_phase, ChannelParams, InterferingFrame, SymbolTable};
use crate::error::{Error, Result};
use crate::phy::{Demodulator, LoraParams};

/// Default offset grid step of the simulation.
pub const DEFAULT_TAU_GRID_STEP: f64 = 0.1;

/// Trials between progress reports and early-stop checks.
const BLOCK: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaMode {
    /// `ω ~ U[0, 2π)`, drawn once per trial.
    Uniform,
    /// `ω ≡ 0`. The draw still happens so streams stay aligned.
    FixedZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    /// Offsets are drawn uniformly from `{jδ} ∩ [0, span)`; `δ = 1` gives
    /// chip-aligned interference.
    pub tau_grid_step: f64,
    pub omega_mode: OmegaMode,
    /// Stop right after the K-th error.
    pub stop_at_errors: Option<u64>,
}

impl McConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            tau_grid_step: DEFAULT_TAU_GRID_STEP,
            omega_mode: OmegaMode::Uniform,
            stop_at_errors: None,
        }
    }

    pub fn with_tau_grid_step(mut self, step: f64) -> Self {
        self.tau_grid_step = step;
        self
    }

    pub fn with_omega_mode(mut self, mode: OmegaMode) -> Self {
        self.omega_mode = mode;
        self
    }

    pub fn with_stop_at_errors(mut self, k: Option<u64>) -> Self {
        self.stop_at_errors = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.tau_grid_step > 0.0 && self.tau_grid_step <= 1.0) {
            return Err(Error::InvalidParameter(format!("tau grid step {} outside (0, 1]", self.tau_grid_step)));
        }
        if self.stop_at_errors == Some(0) {
            return Err(Error::InvalidParameter("stop_at_errors must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of grid offsets in `[0, span)`.
    fn grid_len(&self, span: f64) -> u64 {
        ((span / self.tau_grid_step) - 1e-9).ceil().max(1.0) as u64
    }
}

/// Error-rate estimate with a normal-approximation 95% interval.
///
/// With early stopping `rate = K / trials_run` is biased upwards by roughly
/// `rate / K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub rate: f64,
    pub trials_run: u64,
    pub errors: u64,
    pub ci95_half_width: f64,
    pub stopped_early: bool,
}

impl McEstimate {
    fn from_counts(errors: u64, trials_run: u64, stopped_early: bool) -> Self {
        let n = trials_run as f64;
        let rate = errors as f64 / n;
        let ci95_half_width = 1.96 * (rate * (1.0 - rate) / n).sqrt();
        Self { rate, trials_run, errors, ci95_half_width, stopped_early }
    }

    /// Binomial standard deviation of the estimate at its own rate.
    pub fn std_error(&self) -> f64 {
        self.ci95_half_width / 1.96
    }
}

struct Ctx {
    demod: Demodulator,
    buf: Vec<Complex64>,
    data: Vec<usize>,
    interf: Vec<usize>,
}

impl Ctx {
    fn new(params: LoraParams) -> Self {
        Self {
            demod: Demodulator::new(params),
            buf: vec![Complex64::new(0.0, 0.0); params.n()],
            data: Vec::new(),
            interf: Vec::new(),
        }
    }
}

fn trial_rng(seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    rng
}

/// Uniform on `{0, …, len−1}` from exactly one 64-bit draw, so the stream
/// position after it does not depend on `len`.
fn draw_grid_index(rng: &mut ChaCha8Rng, len: u64) -> u64 {
    ((rng.gen::<f64>() * len as f64) as u64).min(len - 1)
}

fn draw_omega(rng: &mut ChaCha8Rng, mode: OmegaMode) -> f64 {
    let w = uniform_phase(rng);
    match mode {
        OmegaMode::Uniform => w,
        OmegaMode::FixedZero => 0.0,
    }
}

fn run<F>(params: LoraParams, cfg: &McConfig, progress: &(dyn Fn(u64) + Sync), trial: F) -> McEstimate
where
    F: Fn(&mut Ctx, &mut ChaCha8Rng) -> bool + Sync,
{
    let mut errors = 0u64;
    let mut done = 0u64;
    while done < cfg.trials {
        let end = (done + BLOCK).min(cfg.trials);
        let outcomes: Vec<bool> = (done..end)
            .into_par_iter()
            .map_init(|| Ctx::new(params), |ctx, t| trial(ctx, &mut trial_rng(cfg.seed, t)))
            .collect();
        for e in outcomes {
            done += 1;
            if e {
                errors += 1;
                if cfg.stop_at_errors == Some(errors) {
                    progress(done);
                    return McEstimate::from_counts(errors, done, true);
                }
            }
        }
        progress(done);
    }
    McEstimate::from_counts(errors, done, false)
}

/// Symbol error rate: uniform `s`, `s_I1`, `s_I2`, `τ` on the grid over
/// `[0, N)`, `ω` per mode and `φ = 0`.
pub fn mc_ser(params: LoraParams, ch: ChannelParams, cfg: McConfig) -> Result<McEstimate> {
    mc_ser_with_progress(params, ch, cfg, &|_| {})
}

/// [`mc_ser`] reporting the number of completed trials after each block.
pub fn mc_ser_with_progress(
    params: LoraParams,
    ch: ChannelParams,
    cfg: McConfig,
    progress: &(dyn Fn(u64) + Sync),
) -> Result<McEstimate> {
    cfg.validate()?;
    let n = params.n();
    let table = SymbolTable::new(params);
    let grid = cfg.grid_len(n as f64);
    let std = ch.noise_std();
    let h = ch.interferer_amplitude();
    let one = Complex64::new(1.0, 0.0);
    Ok(run(params, &cfg, progress, |ctx, rng| {
        let s = rng.gen_range(0..n);
        let s_i1 = rng.gen_range(0..n);
        let s_i2 = rng.gen_range(0..n);
        let tau = draw_grid_index(rng, grid) as f64 * cfg.tau_grid_step;
        let omega = draw_omega(rng, cfg.omega_mode);
        table.write_symbol(s, one, &mut ctx.buf);
        if ch.interferer_present() {
            table.add_interferer(s_i1, s_i2, tau, Complex64::from_polar(h, -omega), &mut ctx.buf);
        }
        if std > 0.0 {
            add_noise(rng, std, &mut ctx.buf);
        }
        ctx.demod.detect(&mut ctx.buf) != s
    }))
}

/// [`mc_ser`] with chip-aligned offsets `τ ∈ {0, …, N−1}`.
pub fn mc_integer_tau_ser(params: LoraParams, ch: ChannelParams, cfg: McConfig) -> Result<McEstimate> {
    mc_ser(params, ch, cfg.with_tau_grid_step(1.0))
}

/// Frame error rate of `frame_len` uncoded symbols. The interfering frame
/// starts at a grid offset uniform over `[0, F·N)` and keeps one `ω`.
pub fn mc_fer(params: LoraParams, ch: ChannelParams, frame_len: usize, cfg: McConfig) -> Result<McEstimate> {
    mc_fer_with_progress(params, ch, frame_len, cfg, &|_| {})
}

pub fn mc_fer_with_progress(
    params: LoraParams,
    ch: ChannelParams,
    frame_len: usize,
    cfg: McConfig,
    progress: &(dyn Fn(u64) + Sync),
) -> Result<McEstimate> {
    cfg.validate()?;
    if frame_len == 0 {
        return Err(Error::InvalidParameter("frame length must be at least 1".into()));
    }
    let n = params.n();
    let table = SymbolTable::new(params);
    let grid = cfg.grid_len((frame_len * n) as f64);
    let std = ch.noise_std();
    let h = ch.interferer_amplitude();
    let one = Complex64::new(1.0, 0.0);
    Ok(run(params, &cfg, progress, |ctx, rng| {
        ctx.data.clear();
        ctx.data.extend((0..frame_len).map(|_| rng.gen_range(0..n)));
        let lead_in = rng.gen_range(0..n);
        let mut frame = InterferingFrame { offset: 0.0, lead_in, symbols: std::mem::take(&mut ctx.interf) };
        frame.symbols.clear();
        frame.symbols.extend((0..frame_len).map(|_| rng.gen_range(0..n)));
        frame.offset = draw_grid_index(rng, grid) as f64 * cfg.tau_grid_step;
        let omega = draw_omega(rng, cfg.omega_mode);
        let tau = frame.tau(n);
        let gain = Complex64::from_polar(h, -omega);
        let mut err = false;
        for q in 0..frame_len {
            table.write_symbol(ctx.data[q], one, &mut ctx.buf);
            if ch.interferer_present() {
                if let Some((s_i1, s_i2)) = frame.pair_for(n, q) {
                    table.add_interferer(s_i1, s_i2, tau, gain, &mut ctx.buf);
                }
            }
            if std > 0.0 {
                add_noise(rng, std, &mut ctx.buf);
            }
            if ctx.demod.detect(&mut ctx.buf) != ctx.data[q] {
                err = true;
                break;
            }
        }
        ctx.interf = frame.symbols;
        err
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::awgn_rates::{ser_awgn_exact, AwgnSerQuery};
    use std::sync::atomic::{AtomicU64, Ordering};

    fn p(sf: u32) -> LoraParams {
        LoraParams::new(sf).unwrap()
    }

    fn within(est: &McEstimate, want: f64, sigmas: f64) -> bool {
        let sd = (want * (1.0 - want) / est.trials_run as f64).sqrt();
        (est.rate - want).abs() <= sigmas * sd
    }

    #[test]
    fn noiseless_without_interferer_never_errs() {
        let est = mc_ser(p(7), ChannelParams::noiseless(), McConfig::new(2000, 1)).unwrap();
        assert_eq!(est.errors, 0);
        assert_eq!(est.rate, 0.0);
        let est = mc_fer(p(7), ChannelParams::noiseless(), 4, McConfig::new(500, 1)).unwrap();
        assert_eq!(est.errors, 0);
    }

    #[test]
    fn same_seed_same_estimate_any_thread_count() {
        let ch = ChannelParams::new(Some(-8.0), Some(0.0));
        let cfg = McConfig::new(40_000, 9);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| mc_ser(p(6), ch, cfg).unwrap());
        let b = three.install(|| mc_ser(p(6), ch, cfg).unwrap());
        assert_eq!(a, b);
        let fa = one.install(|| mc_fer(p(5), ch, 3, cfg).unwrap());
        let fb = three.install(|| mc_fer(p(5), ch, 3, cfg).unwrap());
        assert_eq!(fa, fb);
        assert_ne!(a, mc_ser(p(6), ch, McConfig::new(40_000, 10)).unwrap());
    }

    #[test]
    fn awgn_matches_exact() {
        let params = p(7);
        let est = mc_ser(params, ChannelParams::new(Some(-7.5), None), McConfig::new(200_000, 3)).unwrap();
        let want = ser_awgn_exact(AwgnSerQuery::new(params, -7.5)).unwrap();
        assert!(within(&est, want, 3.0), "{} vs {want}", est.rate);
    }

    #[test]
    fn early_stop_is_prefix_of_full_run() {
        let ch = ChannelParams::new(Some(-5.0), None);
        let cfg = McConfig::new(30_000, 4);
        let full = mc_ser(p(5), ch, cfg).unwrap();
        let k = 25;
        let stopped = mc_ser(p(5), ch, cfg.with_stop_at_errors(Some(k))).unwrap();
        assert!(stopped.stopped_early);
        assert_eq!(stopped.errors, k);
        assert_eq!(stopped.rate, k as f64 / stopped.trials_run as f64);
        assert!(stopped.trials_run < full.trials_run);
        let prefix = mc_ser(p(5), ch, McConfig::new(stopped.trials_run, 4)).unwrap();
        assert_eq!(prefix.errors, k);
        let short = mc_ser(p(5), ch, McConfig::new(stopped.trials_run - 1, 4)).unwrap();
        assert_eq!(short.errors, k - 1);
    }

    #[test]
    fn progress_reaches_total() {
        let last = AtomicU64::new(0);
        let calls = AtomicU64::new(0);
        let cb = |t: u64| {
            assert!(t >= last.load(Ordering::SeqCst));
            last.store(t, Ordering::SeqCst);
            calls.fetch_add(1, Ordering::SeqCst);
        };
        mc_ser_with_progress(p(4), ChannelParams::new(Some(0.0), None), McConfig::new(40_000, 1), &cb).unwrap();
        assert_eq!(last.load(Ordering::SeqCst), 40_000);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn integer_tau_without_interferer_is_identical() {
        let ch = ChannelParams::new(Some(-6.0), None);
        let cfg = McConfig::new(20_000, 5);
        assert_eq!(mc_ser(p(6), ch, cfg).unwrap(), mc_integer_tau_ser(p(6), ch, cfg).unwrap());
    }

    #[test]
    fn interference_free_fer_is_independent_symbols() {
        let params = p(6);
        let snr = -6.0;
        let ser = ser_awgn_exact(AwgnSerQuery::new(params, snr)).unwrap();
        let f = 5;
        let est = mc_fer(params, ChannelParams::new(Some(snr), None), f, McConfig::new(60_000, 6)).unwrap();
        let want = 1.0 - (1.0 - ser).powi(f as i32);
        assert!(within(&est, want, 3.0), "{} vs {want}", est.rate);
    }

    #[test]
    fn single_symbol_frame_matches_ser() {
        let params = p(6);
        let ch = ChannelParams::new(Some(-4.0), Some(1.0));
        let a = mc_ser(params, ch, McConfig::new(100_000, 7)).unwrap();
        let b = mc_fer(params, ch, 1, McConfig::new(100_000, 8)).unwrap();
        let sd = (a.std_error().powi(2) + b.std_error().powi(2)).sqrt();
        assert!((a.rate - b.rate).abs() < 3.0 * sd, "{} vs {}", a.rate, b.rate);
    }

    #[test]
    fn ci_coverage() {
        let params = p(4);
        let snr = -1.0;
        let want = ser_awgn_exact(AwgnSerQuery::new(params, snr)).unwrap();
        let ch = ChannelParams::new(Some(snr), None);
        let covered = (0..100u64)
            .filter(|&i| {
                let est = mc_ser(params, ch, McConfig::new(3000, 1000 + i)).unwrap();
                (est.rate - want).abs() <= est.ci95_half_width
            })
            .count();
        assert!(covered >= 88, "{covered}");
    }

    #[test]
    fn rejects_bad_config() {
        let ch = ChannelParams::noiseless();
        assert!(mc_ser(p(4), ch, McConfig::new(0, 1)).is_err());
        assert!(mc_ser(p(4), ch, McConfig::new(10, 1).with_tau_grid_step(0.0)).is_err());
        assert!(mc_ser(p(4), ch, McConfig::new(10, 1).with_tau_grid_step(1.5)).is_err());
        assert!(mc_ser(p(4), ch, McConfig::new(10, 1).with_stop_at_errors(Some(0))).is_err());
        assert!(mc_fer(p(4), ch, 0, McConfig::new(10, 1)).is_err());
    }

    #[test]
    fn grid_len_covers_span() {
        let cfg = McConfig::new(1, 0);
        assert_eq!(cfg.grid_len(512.0), 5120);
        assert_eq!(cfg.with_tau_grid_step(1.0).grid_len(16.0), 16);
        assert_eq!(cfg.with_tau_grid_step(0.3).grid_len(16.0), 54);
    }
}
