//! Symbol error rate under AWGN only.
//!
//! After dechirping, the signal bin magnitude over the per-component bin noise
//! std is Rice distributed with location `v = sqrt(2·N·SNR)` and the `N−1`
//! noise bins are Rayleigh. An error occurs when the largest noise bin
//! exceeds the signal bin.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::LoraParams;
use crate::quadrature::adaptive_gauss_kronrod;
use crate::special::{harmonic_number, q_function, rayleigh_log_cdf, rice_log_cdf, EULER_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AwgnSerQuery {
    pub params: LoraParams,
    pub snr_db: f64,
}

impl AwgnSerQuery {
    pub fn new(params: LoraParams, snr_db: f64) -> Self {
        Self { params, snr_db }
    }

    /// Linear per-sample SNR.
    pub fn snr(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Post-dechirp SNR of the signal bin, `N·SNR`.
    pub fn symbol_snr(&self) -> f64 {
        self.params.n() as f64 * self.snr()
    }

    /// Normalized Rice location of the signal bin.
    pub fn rice_location(&self) -> f64 {
        (2.0 * self.symbol_snr()).sqrt()
    }

    fn check(&self) -> Result<()> {
        if self.snr_db.is_nan() {
            return Err(Error::InvalidParameter("snr_db is NaN".into()));
        }
        Ok(())
    }
}

/// Exact SER: `∫ F_Ri(y; v) (N−1) f_Ra(y) F_Ra(y)^{N−2} dy`.
pub fn ser_awgn_exact(q: AwgnSerQuery) -> Result<f64> {
    q.check()?;
    if q.snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    let n = q.params.n() as f64;
    let v = q.rice_location();
    let ln_nm1 = (n - 1.0).ln();
    let integrand = |y: f64| {
        if y <= 0.0 {
            return 0.0;
        }
        let log = rice_log_cdf(y, v) + ln_nm1 + y.ln() - 0.5 * y * y + (n - 2.0) * rayleigh_log_cdf(y);
        log.exp()
    };
    let upper = v.max((2.0 * n.ln()).sqrt()) + 12.0;
    // the integrand peaks near the noise maximum, so split there
    let mid = (2.0 * n.ln()).sqrt();
    let (a, _) = adaptive_gauss_kronrod(integrand, 0.0, mid, 0.0, 1e-11, 4000)?;
    let (b, _) = adaptive_gauss_kronrod(integrand, mid, upper, 0.0, 1e-11, 4000)?;
    Ok((a + b).clamp(0.0, (n - 1.0) / n))
}

/// Gaussian approximation of the largest noise bin.
pub fn ser_awgn_gaussian_approx(q: AwgnSerQuery) -> f64 {
    let h = harmonic_number(q.params.n() as u64 - 1);
    let r = (h * h - PI * PI / 12.0).sqrt();
    let num = q.symbol_snr().sqrt() - r.sqrt();
    let den = (h - r + 0.5).sqrt();
    q_function(num / den)
}

/// Gumbel-limit approximation `Q(sqrt(2 SNR) − sqrt(2 (ln2·SF + γ)))`.
pub fn ser_awgn_concise_approx(q: AwgnSerQuery) -> f64 {
    let sf = q.params.sf() as f64;
    let arg = (2.0 * q.symbol_snr()).sqrt() - (2.0 * (std::f64::consts::LN_2 * sf + EULER_GAMMA)).sqrt();
    q_function(arg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{rayleigh_cdf, rayleigh_pdf, rice_cdf};

    fn q(sf: u32, snr_db: f64) -> AwgnSerQuery {
        AwgnSerQuery::new(LoraParams::new(sf).unwrap(), snr_db)
    }

    #[test]
    fn limits() {
        let low = ser_awgn_exact(q(7, -80.0)).unwrap();
        assert!((low - 127.0 / 128.0).abs() < 1e-6, "{low}");
        assert!((ser_awgn_exact(q(7, f64::NEG_INFINITY)).unwrap() - 127.0 / 128.0).abs() < 1e-9);
        assert_eq!(ser_awgn_exact(q(7, f64::INFINITY)).unwrap(), 0.0);
        assert!(ser_awgn_exact(q(7, 5.0)).unwrap() < 1e-30);
    }

    #[test]
    fn exact_matches_plain_quadrature() {
        // linear-domain integrand with the plain Rayleigh power
        for &(sf, snr) in &[(4, -2.0), (7, -7.5), (9, -12.0)] {
            let query = q(sf, snr);
            let n = query.params.n() as f64;
            let v = query.rice_location();
            let f = |y: f64| rice_cdf(y, v) * (n - 1.0) * rayleigh_pdf(y) * rayleigh_cdf(y).powf(n - 2.0);
            let (want, _) = adaptive_gauss_kronrod(f, 0.0, v + 15.0, 0.0, 1e-12, 5000).unwrap();
            let got = ser_awgn_exact(query).unwrap();
            assert!(((got - want) / want).abs() < 1e-8, "sf {sf}: {got} vs {want}");
        }
    }

    #[test]
    fn gaussian_approx_tracks_exact_on_waterfall() {
        for sf in [7u32, 9, 12] {
            let mut snr = -30.0;
            while snr < 0.0 {
                let query = q(sf, snr);
                let exact = ser_awgn_exact(query).unwrap();
                let approx = ser_awgn_gaussian_approx(query);
                let rel = ((approx - exact) / exact).abs();
                // the approximation overestimates by up to about a quarter mid-waterfall
                if (1e-5..=1e-1).contains(&exact) {
                    assert!(rel < 0.30, "sf {sf} snr {snr}: {approx} vs {exact}");
                }
                if (5e-5..=2e-4).contains(&exact) {
                    assert!(rel < 0.12, "sf {sf} snr {snr}: {approx} vs {exact}");
                }
                snr += 0.25;
            }
        }
    }

    #[test]
    fn gaussian_approx_decreasing() {
        let mut last = 1.0;
        for i in 0..60 {
            let v = ser_awgn_gaussian_approx(q(8, -20.0 + 0.25 * i as f64));
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn concise_reproduces_formula() {
        let query = q(10, -14.0);
        let snr = 1024.0 * 10f64.powf(-1.4);
        let arg = (2.0 * snr).sqrt() - (2.0 * (10.0 * 2f64.ln() + 0.577_215_664_901_532_9)).sqrt();
        let want = 0.5 * libm::erfc(arg / 2f64.sqrt());
        assert_eq!(ser_awgn_concise_approx(query), want);
        assert!(ser_awgn_concise_approx(q(12, f64::NEG_INFINITY)) > 0.9999);
    }

    #[test]
    fn concise_against_gaussian_sf12() {
        // the concise form sits below the Gaussian one on the lower waterfall
        let ratio = |snr: f64| ser_awgn_concise_approx(q(12, snr)) / ser_awgn_gaussian_approx(q(12, snr));
        assert!((0.5..=1.0).contains(&ratio(-21.0)), "{}", ratio(-21.0));
        assert!((1.0 / 3.0..0.5).contains(&ratio(-20.0)), "{}", ratio(-20.0));
    }

    #[test]
    fn exact_is_bounded() {
        for i in 0..20 {
            let v = ser_awgn_exact(q(5, -20.0 + i as f64)).unwrap();
            assert!((0.0..=31.0 / 32.0).contains(&v));
        }
    }
}
