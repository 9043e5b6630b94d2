//! Command-line front end. Every command writes a CSV with a header row to
//! stdout or `--out`; rows are sorted by sf, SNR, SIR, method, ε and frame
//! length.
//!
//! Exit codes: 0 success, 2 usage error, 3 numerical failure.

use std::cmp::Ordering;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::awgn_rates::{ser_awgn_exact, ser_awgn_gaussian_approx, AwgnSerQuery};
use crate::channel::ChannelParams;
use crate::error::Error;
use crate::interf_rates::{fer_approx, required_snr, ser_combined_approx, ser_full_reduced, Metric, SinrQuery};
use crate::mc::{mc_fer_with_progress, mc_ser_with_progress, McConfig, McEstimate, OmegaMode};
use crate::pattern::{amplitude_terms, pattern_brute_force, pattern_magnitudes};
use crate::phy::LoraParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Largest spreading factor accepted by `--exact`.
const MAX_SF_EXACT: u32 = 8;

#[derive(Debug, Parser)]
#[command(name = "lora-interference", version, about = "LoRa error rates under AWGN and same-SF interference")]
pub struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// SER under AWGN only: exact, Gaussian approximation and Monte Carlo.
    SerAwgn(SerAwgnArgs),
    /// SER under AWGN and one same-SF interferer.
    SerInterference(SerInterferenceArgs),
    /// FER of uncoded frames under AWGN and one interfering frame.
    Fer(FerArgs),
    /// SNR needed to reach a target SER or FER, from the approximation.
    RequiredSnr(RequiredSnrArgs),
    /// Interference pattern `|R_k|` of one interfering symbol pair.
    Pattern(PatternArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the resolved configuration as JSON here.
    #[arg(long)]
    pub json_meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Monte Carlo trials per point; 0 disables simulation. Accepts `1e6`.
    #[arg(long, default_value = "0", value_parser = parse_count)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report completed trials on stderr.
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Args)]
pub struct SerAwgnArgs {
    /// Spreading factors, e.g. `7,9` or `7:12:1`.
    #[arg(long, allow_hyphen_values = true)]
    pub sf: String,
    /// SNR grid in dB, `start:stop:step` or a list.
    #[arg(long, allow_hyphen_values = true)]
    pub snr: String,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaArg {
    Uniform,
    Zero,
}

impl From<OmegaArg> for OmegaMode {
    fn from(w: OmegaArg) -> Self {
        match w {
            OmegaArg::Uniform => OmegaMode::Uniform,
            OmegaArg::Zero => OmegaMode::FixedZero,
        }
    }
}

#[derive(Debug, Args)]
pub struct InterferenceArgs {
    /// Spreading factors, e.g. `7,9` or `7:12:1`.
    #[arg(long, allow_hyphen_values = true)]
    pub sf: String,
    /// SNR grid in dB, `start:stop:step` or a list.
    #[arg(long, allow_hyphen_values = true)]
    pub snr: String,
    /// SIR values in dB; `inf` removes the interferer.
    #[arg(long, allow_hyphen_values = true)]
    pub sir: String,
    /// Offset grid steps of the approximation, one row family each.
    #[arg(long, default_value = "0.2", allow_hyphen_values = true)]
    pub epsilon: String,
    /// Offset grid step of the simulation.
    #[arg(long, default_value_t = 0.1)]
    pub tau_step: f64,
    /// Interferer carrier phase: uniform per trial or fixed at zero.
    #[arg(long, value_enum, default_value_t = OmegaArg::Uniform)]
    pub omega: OmegaArg,
    /// Add chip-aligned rows (integer offsets) for every method.
    #[arg(long)]
    pub chip_aligned: bool,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SerInterferenceArgs {
    #[command(flatten)]
    pub common: InterferenceArgs,
    /// Add the exact SER (sf up to 8; slow).
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Args)]
pub struct FerArgs {
    #[command(flatten)]
    pub common: InterferenceArgs,
    /// Symbols per frame.
    #[arg(long, default_value = "10", allow_hyphen_values = true)]
    pub frame_len: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Ser,
    Fer,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Ser => Metric::Ser,
            MetricArg::Fer => Metric::Fer,
        }
    }
}

#[derive(Debug, Args)]
pub struct RequiredSnrArgs {
    /// Spreading factors, e.g. `7,9` or `7:12:1`.
    #[arg(long, allow_hyphen_values = true)]
    pub sf: String,
    /// SIR values in dB; `inf` removes the interferer.
    #[arg(long, allow_hyphen_values = true)]
    pub sir: String,
    #[arg(long, value_enum, default_value_t = MetricArg::Ser)]
    pub metric: MetricArg,
    /// Target rates, e.g. `1e-1,1e-2`.
    #[arg(long, allow_hyphen_values = true)]
    pub target: String,
    /// Symbols per frame, one row each; the SER value does not depend on it.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    pub frame_len: String,
    /// Offset grid step of the approximation.
    #[arg(long, default_value_t = 0.2)]
    pub epsilon: f64,
    /// Search range in dB.
    #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
    pub snr_min: f64,
    #[arg(long, default_value_t = 40.0, allow_hyphen_values = true)]
    pub snr_max: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct PatternArgs {
    #[arg(long)]
    pub sf: u32,
    /// Interfering symbol overlapping the start of the window.
    #[arg(long)]
    pub s_i1: usize,
    /// Interfering symbol overlapping the end of the window.
    #[arg(long)]
    pub s_i2: usize,
    /// Interferer offset in chips, in [0, N).
    #[arg(long)]
    pub tau: f64,
    /// Recompute by direct DFT and report the largest difference.
    #[arg(long)]
    pub check_oracle: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Io(io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence { .. } | Error::NotBracketed { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Parses `1000000` or `1e6` into a non-negative integer count.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s}"))?;
    if !(v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64) {
        return Err(format!("not a non-negative integer: {s}"));
    }
    Ok(v as u64)
}

fn parse_value(s: &str) -> CliResult<f64> {
    match s.trim() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t.parse::<f64>().or_else(|_| usage(format!("not a number: {s}"))),
    }
}

/// Expands comma-separated items, each a value or a `start:stop:step` range
/// with `start ≤ stop` and `step > 0`.
pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [v] => out.push(parse_value(v)?),
            [a, b, step] => {
                let (a, b, step) = (parse_value(a)?, parse_value(b)?, parse_value(step)?);
                if !(a.is_finite() && b.is_finite() && step.is_finite()) || step <= 0.0 {
                    return usage(format!("bad range {item}"));
                }
                if a > b {
                    return usage(format!("empty range {item}: start above stop"));
                }
                let count = ((b - a) / step + 1e-9).floor() as usize + 1;
                // rounding keeps grid values such as -7.5 exact in the output
                out.extend((0..count).map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9));
            }
            _ => return usage(format!("bad grid item {item}")),
        }
    }
    if out.is_empty() {
        return usage(format!("empty grid '{s}'"));
    }
    Ok(out)
}

fn parse_sfs(s: &str) -> CliResult<Vec<LoraParams>> {
    parse_grid(s)?
        .into_iter()
        .map(|v| {
            if v.fract() != 0.0 || v < 0.0 {
                return usage(format!("spreading factor {v} is not an integer"));
            }
            Ok(LoraParams::new(v as u32)?)
        })
        .collect()
}

fn parse_frame_lens(s: &str) -> CliResult<Vec<usize>> {
    parse_grid(s)?
        .into_iter()
        .map(|v| {
            if v.fract() != 0.0 || v < 1.0 {
                return usage(format!("frame length {v} must be a positive integer"));
            }
            Ok(v as usize)
        })
        .collect()
}

/// `inf` maps to no interferer.
fn sir_option(v: f64) -> CliResult<Option<f64>> {
    if v == f64::INFINITY {
        Ok(None)
    } else if v.is_finite() {
        Ok(Some(v))
    } else {
        usage("SIR must be finite or inf")
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v:.9e}")
}

fn fmt_db(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), |x| format!("{x}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mc,
    Exact,
    Approx,
    ChipAlignedMc,
    ChipAlignedApprox,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Exact => "exact",
            Method::Approx => "approx",
            Method::ChipAlignedMc => "chip_aligned_mc",
            Method::ChipAlignedApprox => "chip_aligned_approx",
        }
    }
}

/// One CSV line of the rate commands.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub sf: u32,
    pub snr_db: f64,
    pub sir_db: Option<f64>,
    pub metric: Metric,
    pub method: Method,
    /// Approximation grid step, or the simulation offset step for MC rows.
    pub epsilon: Option<f64>,
    pub frame_len: usize,
    pub value: f64,
    pub mc: Option<McEstimate>,
}

pub const RATE_HEADER: &str = "sf,snr_db,sir_db,metric,method,epsilon,frame_len,value,ci95,trials";
pub const REQUIRED_SNR_HEADER: &str = "sf,sir_db,metric,target,frame_len,method,required_snr_db,status";
pub const PATTERN_HEADER: &str = "k,magnitude,a1,a2";

impl CsvRow {
    fn to_line(&self) -> String {
        let (ci, trials) = match &self.mc {
            Some(e) => (fmt_value(e.ci95_half_width), e.trials_run.to_string()),
            None => (String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.sf,
            self.snr_db,
            fmt_db(self.sir_db),
            self.metric.as_str(),
            self.method.as_str(),
            self.epsilon.map_or_else(String::new, |e| e.to_string()),
            self.frame_len,
            fmt_value(self.value),
            ci,
            trials
        )
    }

    fn sort_key_cmp(&self, o: &Self) -> Ordering {
        let sir = |r: &Self| r.sir_db.unwrap_or(f64::INFINITY);
        self.sf
            .cmp(&o.sf)
            .then(self.snr_db.total_cmp(&o.snr_db))
            .then(sir(self).total_cmp(&sir(o)))
            .then(self.method.as_str().cmp(o.method.as_str()))
            .then(self.epsilon.unwrap_or(0.0).total_cmp(&o.epsilon.unwrap_or(0.0)))
            .then(self.frame_len.cmp(&o.frame_len))
    }
}

fn write_rows(mut rows: Vec<CsvRow>, out: &mut dyn Write) -> io::Result<()> {
    rows.sort_by(CsvRow::sort_key_cmp);
    writeln!(out, "{RATE_HEADER}")?;
    for r in &rows {
        writeln!(out, "{}", r.to_line())?;
    }
    Ok(())
}

fn progress_hook(enabled: bool, label: String) -> impl Fn(u64) + Sync {
    move |t| {
        if enabled {
            eprintln!("{label}: {t} trials");
        }
    }
}

#[derive(Debug, Serialize)]
struct Meta<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    threads: Option<usize>,
    config: T,
}

#[derive(Debug, Serialize)]
struct RateMeta {
    sf: Vec<u32>,
    snr_db: Vec<f64>,
    sir_db: Vec<Option<f64>>,
    epsilon: Vec<f64>,
    frame_len: Vec<usize>,
    trials: u64,
    seed: u64,
    tau_step: Option<f64>,
    omega: Option<OmegaArg>,
    chip_aligned: bool,
    exact: bool,
}

#[derive(Debug, Serialize)]
struct RequiredSnrMeta {
    sf: Vec<u32>,
    sir_db: Vec<Option<f64>>,
    metric: MetricArg,
    target: Vec<f64>,
    frame_len: Vec<usize>,
    epsilon: f64,
    snr_min: f64,
    snr_max: f64,
}

#[derive(Debug, Serialize)]
struct PatternMeta {
    sf: u32,
    s_i1: usize,
    s_i2: usize,
    tau: f64,
    check_oracle: bool,
}

fn write_meta<T: Serialize>(path: &Option<PathBuf>, command: &str, threads: Option<usize>, config: T) -> CliResult<()> {
    if let Some(p) = path {
        let meta = Meta { command, version: env!("CARGO_PKG_VERSION"), threads, config };
        let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Io(io::Error::other(e)))?;
        std::fs::write(p, text + "\n")?;
    }
    Ok(())
}

/// Renders the command output into a buffer so nothing is written when a
/// later point fails.
fn emit(output: &Output, body: &[u8], stdout: &mut dyn Write) -> CliResult<()> {
    match &output.out {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            f.write_all(body)?;
            f.flush()?;
        }
        None => stdout.write_all(body)?,
    }
    Ok(())
}

fn cmd_ser_awgn(a: &SerAwgnArgs, threads: Option<usize>, stdout: &mut dyn Write) -> CliResult<()> {
    let sfs = parse_sfs(&a.sf)?;
    let snrs = parse_grid(&a.snr)?;
    let mut rows = Vec::new();
    for &params in &sfs {
        for &snr in &snrs {
            let q = AwgnSerQuery::new(params, snr);
            let base = CsvRow {
                sf: params.sf(),
                snr_db: snr,
                sir_db: None,
                metric: Metric::Ser,
                method: Method::Exact,
                epsilon: None,
                frame_len: 1,
                value: ser_awgn_exact(q)?,
                mc: None,
            };
            rows.push(CsvRow { method: Method::Approx, value: ser_awgn_gaussian_approx(q), ..base.clone() });
            if a.mc.trials > 0 {
                let ch = ChannelParams::new(Some(snr), None);
                let hook = progress_hook(a.mc.progress, format!("sf {} snr {snr}", params.sf()));
                let est = mc_ser_with_progress(params, ch, McConfig::new(a.mc.trials, a.mc.seed), &hook)?;
                rows.push(CsvRow { method: Method::Mc, value: est.rate, mc: Some(est), ..base.clone() });
            }
            rows.push(base);
        }
    }
    let mut body = Vec::new();
    write_rows(rows, &mut body)?;
    emit(&a.output, &body, stdout)?;
    let meta = RateMeta {
        sf: sfs.iter().map(|p| p.sf()).collect(),
        snr_db: snrs,
        sir_db: vec![None],
        epsilon: vec![],
        frame_len: vec![1],
        trials: a.mc.trials,
        seed: a.mc.seed,
        tau_step: None,
        omega: None,
        chip_aligned: false,
        exact: true,
    };
    write_meta(&a.output.json_meta, "ser-awgn", threads, meta)
}

struct Resolved {
    sfs: Vec<LoraParams>,
    snrs: Vec<f64>,
    sirs: Vec<Option<f64>>,
    epsilons: Vec<f64>,
}

fn resolve(c: &InterferenceArgs) -> CliResult<Resolved> {
    let sfs = parse_sfs(&c.sf)?;
    let snrs = parse_grid(&c.snr)?;
    let sirs = parse_grid(&c.sir)?.into_iter().map(sir_option).collect::<CliResult<Vec<_>>>()?;
    let epsilons = parse_grid(&c.epsilon)?;
    if let Some(e) = epsilons.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
        return usage(format!("epsilon {e} outside (0, 1]"));
    }
    if !(c.tau_step > 0.0 && c.tau_step <= 1.0) {
        return usage(format!("tau step {} outside (0, 1]", c.tau_step));
    }
    Ok(Resolved { sfs, snrs, sirs, epsilons })
}

fn rate_meta(c: &InterferenceArgs, r: &Resolved, frame_len: Vec<usize>, exact: bool) -> RateMeta {
    RateMeta {
        sf: r.sfs.iter().map(|p| p.sf()).collect(),
        snr_db: r.snrs.clone(),
        sir_db: r.sirs.clone(),
        epsilon: r.epsilons.clone(),
        frame_len,
        trials: c.mc.trials,
        seed: c.mc.seed,
        tau_step: Some(c.tau_step),
        omega: Some(c.omega),
        chip_aligned: c.chip_aligned,
        exact,
    }
}

/// Rows for one operating point and every method. `frame_len == None` is the
/// symbol error rate.
fn interference_rows(
    c: &InterferenceArgs,
    params: LoraParams,
    snr: f64,
    sir: Option<f64>,
    epsilons: &[f64],
    frame_len: Option<usize>,
    exact: bool,
) -> CliResult<Vec<CsvRow>> {
    let metric = if frame_len.is_some() { Metric::Fer } else { Metric::Ser };
    let f = frame_len.unwrap_or(1);
    let row = |method, epsilon, value, mc| CsvRow {
        sf: params.sf(),
        snr_db: snr,
        sir_db: sir,
        metric,
        method,
        epsilon,
        frame_len: f,
        value,
        mc,
    };
    let approx = |eps: f64| -> CliResult<f64> {
        let q = SinrQuery::new(params, snr, sir).with_epsilon(eps).with_frame_len(f);
        Ok(if frame_len.is_some() { fer_approx(q)? } else { ser_combined_approx(q)? })
    };
    let mut rows = Vec::new();
    for &eps in epsilons {
        rows.push(row(Method::Approx, Some(eps), approx(eps)?, None));
    }
    if c.chip_aligned {
        rows.push(row(Method::ChipAlignedApprox, Some(1.0), approx(1.0)?, None));
    }
    if exact {
        if params.sf() > MAX_SF_EXACT {
            return usage(format!("--exact supports sf up to {MAX_SF_EXACT}"));
        }
        rows.push(row(Method::Exact, None, ser_full_reduced(SinrQuery::new(params, snr, sir))?, None));
    }
    if c.mc.trials > 0 {
        let ch = ChannelParams::new(Some(snr), sir);
        let cfg = McConfig::new(c.mc.trials, c.mc.seed).with_omega_mode(c.omega.into());
        let sim = |step: f64, method: Method| -> CliResult<CsvRow> {
            let label = format!("sf {} snr {snr} sir {} {}", params.sf(), fmt_db(sir), method.as_str());
            let hook = progress_hook(c.mc.progress, label);
            let cfg = cfg.with_tau_grid_step(step);
            let est = match frame_len {
                Some(f) => mc_fer_with_progress(params, ch, f, cfg, &hook)?,
                None => mc_ser_with_progress(params, ch, cfg, &hook)?,
            };
            Ok(row(method, Some(step), est.rate, Some(est)))
        };
        rows.push(sim(c.tau_step, Method::Mc)?);
        if c.chip_aligned {
            rows.push(sim(1.0, Method::ChipAlignedMc)?);
        }
    }
    Ok(rows)
}

fn cmd_ser_interference(a: &SerInterferenceArgs, threads: Option<usize>, stdout: &mut dyn Write) -> CliResult<()> {
    let c = &a.common;
    let r = resolve(c)?;
    let mut rows = Vec::new();
    for &params in &r.sfs {
        for &snr in &r.snrs {
            for &sir in &r.sirs {
                rows.extend(interference_rows(c, params, snr, sir, &r.epsilons, None, a.exact)?);
            }
        }
    }
    let mut body = Vec::new();
    write_rows(rows, &mut body)?;
    emit(&c.output, &body, stdout)?;
    write_meta(&c.output.json_meta, "ser-interference", threads, rate_meta(c, &r, vec![1], a.exact))
}

fn cmd_fer(a: &FerArgs, threads: Option<usize>, stdout: &mut dyn Write) -> CliResult<()> {
    let c = &a.common;
    let r = resolve(c)?;
    let frame_lens = parse_frame_lens(&a.frame_len)?;
    let mut rows = Vec::new();
    for &params in &r.sfs {
        for &snr in &r.snrs {
            for &sir in &r.sirs {
                for &f in &frame_lens {
                    rows.extend(interference_rows(c, params, snr, sir, &r.epsilons, Some(f), false)?);
                }
            }
        }
    }
    let mut body = Vec::new();
    write_rows(rows, &mut body)?;
    emit(&c.output, &body, stdout)?;
    write_meta(&c.output.json_meta, "fer", threads, rate_meta(c, &r, frame_lens, false))
}

fn cmd_required_snr(a: &RequiredSnrArgs, threads: Option<usize>, stdout: &mut dyn Write) -> CliResult<()> {
    let sfs = parse_sfs(&a.sf)?;
    let sirs = parse_grid(&a.sir)?.into_iter().map(sir_option).collect::<CliResult<Vec<_>>>()?;
    let targets = parse_grid(&a.target)?;
    if let Some(t) = targets.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return usage(format!("target {t} outside (0, 1)"));
    }
    let frame_lens = parse_frame_lens(&a.frame_len)?;
    if !(a.epsilon > 0.0 && a.epsilon <= 1.0) {
        return usage(format!("epsilon {} outside (0, 1]", a.epsilon));
    }
    if a.snr_min.partial_cmp(&a.snr_max) != Some(std::cmp::Ordering::Less) {
        return usage("snr-min must be below snr-max");
    }
    let metric: Metric = a.metric.into();
    let mut lines = Vec::new();
    for &params in &sfs {
        for &sir in &sirs {
            for &target in &targets {
                for &f in &frame_lens {
                    let q = SinrQuery::new(params, a.snr_max, sir).with_epsilon(a.epsilon).with_frame_len(f);
                    let (value, status) = match required_snr(q, target, metric, a.snr_min, a.snr_max) {
                        Ok(v) => (format!("{v:.4}"), "ok"),
                        Err(Error::NotBracketed { .. }) => (String::new(), "unreachable"),
                        Err(e) => return Err(e.into()),
                    };
                    let key = (params.sf(), sir.unwrap_or(f64::INFINITY), target, f);
                    let line = format!(
                        "{},{},{},{},{},approx,{},{}",
                        params.sf(),
                        fmt_db(sir),
                        metric.as_str(),
                        fmt_value(target),
                        f,
                        value,
                        status
                    );
                    lines.push((key, line));
                }
            }
        }
    }
    lines.sort_by(|(a, _), (b, _)| {
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(b.2.total_cmp(&a.2)).then(a.3.cmp(&b.3))
    });
    let mut body = Vec::new();
    writeln!(body, "{REQUIRED_SNR_HEADER}")?;
    for (_, l) in &lines {
        writeln!(body, "{l}")?;
    }
    emit(&a.output, &body, stdout)?;
    let meta = RequiredSnrMeta {
        sf: sfs.iter().map(|p| p.sf()).collect(),
        sir_db: sirs,
        metric: a.metric,
        target: targets,
        frame_len: frame_lens,
        epsilon: a.epsilon,
        snr_min: a.snr_min,
        snr_max: a.snr_max,
    };
    write_meta(&a.output.json_meta, "required-snr", threads, meta)
}

fn cmd_pattern(a: &PatternArgs, threads: Option<usize>, stdout: &mut dyn Write) -> CliResult<()> {
    let params = LoraParams::new(a.sf)?;
    let pat = pattern_magnitudes(params, a.s_i1, a.s_i2, a.tau)?;
    let mut body = Vec::new();
    writeln!(body, "{PATTERN_HEADER}")?;
    for (k, m) in pat.magnitudes.iter().enumerate() {
        let (a1, a2) = amplitude_terms(params, a.s_i1, a.s_i2, a.tau, k);
        writeln!(body, "{k},{},{},{}", fmt_value(*m), fmt_value(a1), fmt_value(a2))?;
    }
    let n = params.n() as f64;
    writeln!(body, "# energy={},n_squared={}", fmt_value(pat.energy()), fmt_value(n * n))?;
    if a.check_oracle {
        let oracle = pattern_brute_force(params, a.s_i1, a.s_i2, a.tau)?;
        let diff = pat.magnitudes.iter().zip(&oracle).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        writeln!(body, "# oracle_max_abs_diff={}", fmt_value(diff))?;
    }
    emit(&a.output, &body, stdout)?;
    let meta = PatternMeta { sf: a.sf, s_i1: a.s_i1, s_i2: a.s_i2, tau: a.tau, check_oracle: a.check_oracle };
    write_meta(&a.output.json_meta, "pattern", threads, meta)
}

fn dispatch(cli: &Cli, stdout: &mut Vec<u8>) -> CliResult<()> {
    let t = cli.threads;
    match &cli.command {
        Command::SerAwgn(a) => cmd_ser_awgn(a, t, stdout),
        Command::SerInterference(a) => cmd_ser_interference(a, t, stdout),
        Command::Fer(a) => cmd_fer(a, t, stdout),
        Command::RequiredSnr(a) => cmd_required_snr(a, t, stdout),
        Command::Pattern(a) => cmd_pattern(a, t, stdout),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut buf = Vec::new();
    let result = match cli.threads {
        Some(0) => usage("--threads must be at least 1"),
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, &mut buf)),
            Err(e) => usage(format!("cannot start {k} threads: {e}")),
        },
        None => dispatch(&cli, &mut buf),
    }
    .and_then(|()| Ok(stdout.write_all(&buf)?));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}
