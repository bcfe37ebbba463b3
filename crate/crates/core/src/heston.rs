//! Heston characteristic function and COS-method European option pricing.
//!
//! The characteristic function is that of the log-price `ln S_T`, written as
//! `exp(A(τ) + B(τ)·v + iψ·ln S)`. The square root `M` is taken with
//! non-positive real part so that `e^{Mτ}` decays; with that choice the
//! logarithm stays on its principal branch for every maturity and no
//! rotation counting is needed. Differences like `ργiψ − κ − M` are
//! rewritten in cancellation-free form so the `γ → 0` limit is exact.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Heston model parameters plus rate and spot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    /// Mean-reversion rate of the variance.
    pub kappa: f64,
    /// Correlation between spot and variance shocks.
    pub rho: f64,
    /// Volatility of variance.
    pub gamma: f64,
    /// Long-run variance.
    pub v_bar: f64,
    /// Initial variance.
    pub v0: f64,
    /// Continuously compounded risk-free rate.
    pub r: f64,
    /// Spot price.
    pub s0: f64,
}

impl HestonParams {
    pub fn new(kappa: f64, rho: f64, gamma: f64, v_bar: f64, v0: f64, r: f64, s0: f64) -> Result<Self> {
        let p = Self { kappa, rho, gamma, v_bar, v0, r, s0 };
        p.validate()?;
        Ok(p)
    }

    /// The fixed out-of-training parameter set (κ=2.7, ρ=−0.4, γ=0.2, v̄=v0=0.4, r=0.02).
    pub fn out_of_training() -> Self {
        Self { kappa: 2.7, rho: -0.4, gamma: 0.2, v_bar: 0.4, v0: 0.4, r: 0.02, s0: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.kappa, self.rho, self.gamma, self.v_bar, self.v0, self.r, self.s0];
        if fields.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite Heston parameter in {self:?}")));
        }
        if self.kappa < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidInput("kappa and gamma must be non-negative".into()));
        }
        if self.v_bar <= 0.0 || self.v0 <= 0.0 {
            return Err(Error::InvalidInput("v_bar and v0 must be positive".into()));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::InvalidInput(format!("rho = {} outside (-1, 1)", self.rho)));
        }
        if self.s0 <= 0.0 {
            return Err(Error::InvalidInput("s0 must be positive".into()));
        }
        Ok(())
    }
}

/// Numerical controls of the cosine expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosConfig {
    pub n_terms: usize,
    /// Truncation half-width in units of the log-price standard deviation.
    pub trunc_width: f64,
}

impl Default for CosConfig {
    fn default() -> Self {
        Self { n_terms: 512, trunc_width: 12.0 }
    }
}

impl CosConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_terms < 16 || !self.n_terms.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "n_terms = {} must be a power of two >= 16",
                self.n_terms
            )));
        }
        if !(self.trunc_width > 0.0 && self.trunc_width.is_finite()) {
            return Err(Error::InvalidInput("trunc_width must be positive".into()));
        }
        Ok(())
    }
}

/// `ln(1 + q) / q`, accurate for tiny `q`.
fn log1p_ratio(q: Complex64) -> Complex64 {
    if q.norm() < 1e-5 {
        Complex64::new(1.0, 0.0) - q / 2.0 + q * q / 3.0 - q * q * q / 4.0
    } else {
        (Complex64::new(1.0, 0.0) + q).ln() / q
    }
}

/// Exponent `A(τ) + B(τ)·v_t` of the characteristic function (without the spot term).
fn charfn_exponent(p: &HestonParams, v_t: f64, tau: f64, psi: f64) -> Result<Complex64> {
    let i = Complex64::i();
    let g2 = p.gamma * p.gamma;
    // s = iψ + ψ²
    let s = Complex64::new(psi * psi, psi);
    // β = κ − ργiψ, so that ργiψ − κ = −β
    let beta = Complex64::new(p.kappa, -p.rho * p.gamma * psi);
    // d = −M, principal root: Re d ≥ 0
    let d = (beta * beta + s * g2).sqrt();
    let beta_plus_d = beta + d;
    // (β − d)/γ², i.e. −(ργiψ − κ − M)/γ², without cancellation
    let bmd_over_g2 = -s / beta_plus_d;
    // N = (β − d)/(β + d)
    let n = bmd_over_g2 * g2 / beta_plus_d;
    let decay = (-d * tau).exp();
    let one = Complex64::new(1.0, 0.0);

    let b = bmd_over_g2 * (one - decay) / (one - n * decay);
    // ln((1 − N e^{Mτ}) / (1 − N)) = ln(1 + q), q = N(1 − e^{Mτ})/(1 − N)
    let q_over_g2 = bmd_over_g2 / beta_plus_d * (one - decay) / (one - n);
    let q = q_over_g2 * g2;
    let log_over_g2 = q_over_g2 * log1p_ratio(q);
    let a = i * (p.r * psi * tau) + p.kappa * p.v_bar * (bmd_over_g2 * tau - 2.0 * log_over_g2);

    let out = a + b * v_t;
    if !(out.re.is_finite() && out.im.is_finite()) {
        return Err(Error::NumericOverflow(format!(
            "Heston characteristic exponent at psi={psi}, tau={tau}: {out}"
        )));
    }
    Ok(out)
}

/// Heston characteristic function of `ln S_T` evaluated at real `psi`.
pub fn heston_charfn(p: &HestonParams, v_t: f64, tau: f64, psi: f64) -> Result<Complex64> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidInput(format!("tau = {tau} must be non-negative")));
    }
    let expo = charfn_exponent(p, v_t, tau, psi)? + Complex64::new(0.0, psi * p.s0.ln());
    let out = expo.exp();
    if !(out.re.is_finite() && out.im.is_finite()) {
        return Err(Error::NumericOverflow(format!("charfn overflow at psi={psi}")));
    }
    Ok(out)
}

/// First two cumulants of `ln S_T`, from finite differences of the exponent at 0.
fn log_price_cumulants(p: &HestonParams, maturity: f64) -> Result<(f64, f64)> {
    let delta = 1e-3;
    let up = charfn_exponent(p, p.v0, maturity, delta)?;
    let dn = charfn_exponent(p, p.v0, maturity, -delta)?;
    let c1 = p.s0.ln() + (up.im - dn.im) / (2.0 * delta);
    let mut c2 = -(up.re + dn.re) / (delta * delta);
    if !(c2.is_finite() && c2 > 0.0) {
        c2 = p.v0.max(p.v_bar) * maturity;
    }
    Ok((c1, c2))
}

/// Shared per-maturity state of the cosine expansion.
struct CosExpansion {
    a: f64,
    b: f64,
    /// Re-weighted series terms `f(u_n)·e^{−i u_n a}`, first one halved.
    terms: Vec<Complex64>,
    discount: f64,
}

impl CosExpansion {
    fn new(p: &HestonParams, maturity: f64, cfg: &CosConfig) -> Result<Self> {
        p.validate()?;
        cfg.validate()?;
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::InvalidInput(format!("maturity = {maturity} must be positive")));
        }
        let (c1, c2) = log_price_cumulants(p, maturity)?;
        let half = cfg.trunc_width * c2.sqrt();
        let (a, b) = (c1 - half, c1 + half);
        let width = b - a;
        let mut terms = Vec::with_capacity(cfg.n_terms);
        for n in 0..cfg.n_terms {
            let u = n as f64 * PI / width;
            let f = heston_charfn(p, p.v0, maturity, u)?;
            let mut t = f * Complex64::new(0.0, -u * a).exp();
            if n == 0 {
                t *= 0.5;
            }
            terms.push(t);
        }
        Ok(Self { a, b, terms, discount: (-p.r * maturity).exp() })
    }

    /// `χ_n(c, d)` and `ψ_n(c, d)` cosine coefficients of `e^y` and `1` over `[c, d]`.
    fn chi_psi(&self, n: usize, c: f64, d: f64) -> (f64, f64) {
        let width = self.b - self.a;
        let w = n as f64 * PI / width;
        let (sd, cd) = (w * (d - self.a)).sin_cos();
        let (sc, cc) = (w * (c - self.a)).sin_cos();
        let (ed, ec) = (d.exp(), c.exp());
        let chi = (cd * ed - cc * ec + w * (sd * ed - sc * ec)) / (1.0 + w * w);
        let psi = if n == 0 { d - c } else { (sd - sc) / w };
        (chi, psi)
    }

    fn call(&self, strike: f64) -> f64 {
        let log_k = strike.ln();
        if log_k >= self.b {
            return 0.0;
        }
        let c = log_k.max(self.a);
        let scale = 2.0 / (self.b - self.a);
        let mut sum = 0.0;
        for (n, t) in self.terms.iter().enumerate() {
            let (chi, psi) = self.chi_psi(n, c, self.b);
            sum += t.re * scale * (chi - strike * psi);
        }
        self.discount * sum
    }

    fn put(&self, strike: f64) -> f64 {
        let log_k = strike.ln();
        if log_k <= self.a {
            return 0.0;
        }
        let e = log_k.min(self.b);
        let scale = 2.0 / (self.b - self.a);
        let mut sum = 0.0;
        for (n, t) in self.terms.iter().enumerate() {
            let (chi, psi) = self.chi_psi(n, self.a, e);
            sum += t.re * scale * (strike * psi - chi);
        }
        self.discount * sum
    }
}

fn check_call_bracket(p: &HestonParams, strike: f64, maturity: f64, price: f64) -> Result<f64> {
    let lower = (p.s0 - strike * (-p.r * maturity).exp()).max(0.0);
    let upper = p.s0;
    let tol = 1e-8 * p.s0;
    if !price.is_finite() || price < lower - tol || price > upper + tol {
        return Err(Error::Convergence(format!(
            "COS call price {price} outside [{lower}, {upper}] for K={strike}, T={maturity}; increase n_terms"
        )));
    }
    Ok(price.clamp(lower, upper))
}

fn validate_strike(strike: f64) -> Result<()> {
    if strike > 0.0 && strike.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("strike = {strike} must be positive")))
    }
}

/// European call price under Heston by the COS method.
///
/// Prices landing within `1e-8·s0` outside the static bounds are clipped onto
/// them; anything further out is reported as a convergence failure.
pub fn cos_call_price(p: &HestonParams, strike: f64, maturity: f64, cfg: &CosConfig) -> Result<f64> {
    Ok(cos_call_prices(p, &[strike], maturity, cfg)?[0])
}

/// Call prices for many strikes at one maturity, sharing the series terms.
pub fn cos_call_prices(p: &HestonParams, strikes: &[f64], maturity: f64, cfg: &CosConfig) -> Result<Vec<f64>> {
    let exp = CosExpansion::new(p, maturity, cfg)?;
    strikes
        .iter()
        .map(|&k| {
            validate_strike(k)?;
            check_call_bracket(p, k, maturity, exp.call(k))
        })
        .collect()
}

/// European put price from the same expansion with put payoff coefficients.
pub fn cos_put_price(p: &HestonParams, strike: f64, maturity: f64, cfg: &CosConfig) -> Result<f64> {
    validate_strike(strike)?;
    let exp = CosExpansion::new(p, maturity, cfg)?;
    let price = exp.put(strike);
    if !price.is_finite() {
        return Err(Error::NonFinite(format!("COS put price for K={strike}")));
    }
    Ok(price)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackscholes::{bs_call, BsQuote};

    fn reference_market() -> HestonParams {
        HestonParams::out_of_training()
    }

    fn degenerate(r: f64) -> HestonParams {
        HestonParams { kappa: 1.5, rho: -0.3, gamma: 1e-12, v_bar: 0.04, v0: 0.04, r, s0: 1.0 }
    }

    #[test]
    fn charfn_at_zero_maturity_and_zero_argument_is_one() {
        let f = heston_charfn(&reference_market(), 0.4, 0.0, 0.0).unwrap();
        assert_eq!(f, Complex64::new(1.0, 0.0));
        let f = heston_charfn(&reference_market(), 0.4, 1.3, 0.0).unwrap();
        assert!((f - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn degenerate_charfn_matches_gbm_modulus() {
        let p = degenerate(0.02);
        let tau = 1.0;
        for psi in [0.5, 1.0, 5.0] {
            let f = heston_charfn(&p, p.v0, tau, psi).unwrap();
            let gbm = (-0.5 * 0.04 * tau * psi * psi).exp();
            assert!((f.norm() - gbm).abs() / gbm < 1e-6, "psi={psi}: {} vs {gbm}", f.norm());
        }
    }

    #[test]
    fn negative_tau_rejected() {
        assert!(heston_charfn(&reference_market(), 0.4, -0.1, 1.0).is_err());
    }

    #[test]
    fn cos_config_rejects_non_power_of_two() {
        let p = reference_market();
        let cfg = CosConfig { n_terms: 100, trunc_width: 12.0 };
        assert!(cos_call_price(&p, 1.0, 1.0, &cfg).is_err());
        let cfg = CosConfig { n_terms: 8, trunc_width: 12.0 };
        assert!(cos_call_price(&p, 1.0, 1.0, &cfg).is_err());
    }

    #[test]
    fn degenerate_heston_equals_black_scholes() {
        let p = degenerate(0.02);
        let cos = cos_call_price(&p, 1.0, 1.0, &CosConfig::default()).unwrap();
        let bs = bs_call(&BsQuote { s0: 1.0, strike: 1.0, maturity: 1.0, rate: 0.02, sigma: 0.2 });
        assert!((cos - bs).abs() < 1e-6, "{cos} vs {bs}");
    }

    #[test]
    fn deep_in_the_money_limit() {
        let p = reference_market();
        let k = 1e-8;
        let price = cos_call_price(&p, k, 1.0, &CosConfig::default()).unwrap();
        let limit = p.s0 - k * (-p.r).exp();
        assert!((price - limit).abs() < 1e-6);
    }

    #[test]
    fn put_call_parity() {
        let p = reference_market();
        let cfg = CosConfig::default();
        for &(k, t) in &[(0.6, 0.5), (1.0, 1.0), (1.7, 2.0), (2.5, 0.7)] {
            let c = cos_call_price(&p, k, t, &cfg).unwrap();
            let put = cos_put_price(&p, k, t, &cfg).unwrap();
            let parity = p.s0 - k * (-p.r * t).exp();
            assert!((c - put - parity).abs() < 1e-8, "K={k} T={t}: {}", c - put - parity);
        }
    }

    #[test]
    fn doubling_terms_is_converged() {
        let p = HestonParams { kappa: 0.3, rho: -0.85, gamma: 0.5, v_bar: 0.02, v0: 0.06, r: 0.04, s0: 1.0 };
        let c512 = CosConfig::default();
        let c1024 = CosConfig { n_terms: 1024, ..c512 };
        for &k in &[0.5, 0.9, 1.0, 1.4, 2.5] {
            for &t in &[0.3, 1.0, 2.0] {
                let a = cos_call_price(&p, k, t, &c512).unwrap();
                let b = cos_call_price(&p, k, t, &c1024).unwrap();
                assert!((a - b).abs() < 1e-8, "K={k} T={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn prices_monotone_on_grid() {
        let p = reference_market();
        let strikes: Vec<f64> = (0..30).map(|i| 0.5 + 2.0 * i as f64 / 29.0).collect();
        let mut prev: Option<Vec<f64>> = None;
        for j in 0..10 {
            let t = 0.5 + 1.5 * j as f64 / 9.0;
            let row = cos_call_prices(&p, &strikes, t, &CosConfig::default()).unwrap();
            for w in row.windows(2) {
                assert!(w[1] <= w[0]);
            }
            if let Some(prev) = prev {
                for (a, b) in prev.iter().zip(&row) {
                    assert!(b >= a);
                }
            }
            prev = Some(row);
        }
    }
}
