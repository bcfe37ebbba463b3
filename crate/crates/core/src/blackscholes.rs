//! Black-Scholes call pricing and implied volatility by Brent's method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of a European call under Black-Scholes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsQuote {
    pub s0: f64,
    pub strike: f64,
    pub maturity: f64,
    pub rate: f64,
    pub sigma: f64,
}

impl BsQuote {
    pub fn validate(&self) -> Result<()> {
        let ok = self.s0 > 0.0
            && self.strike > 0.0
            && self.maturity > 0.0
            && self.sigma >= 0.0
            && self.rate.is_finite()
            && self.s0.is_finite()
            && self.strike.is_finite()
            && self.maturity.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid Black-Scholes quote {self:?}")))
        }
    }
}

/// Standard normal cumulative distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Closed-form Black-Scholes call value.
///
/// `sigma = 0` gives the discounted intrinsic value and `sigma = ∞` gives `s0`.
pub fn bs_call(q: &BsQuote) -> f64 {
    let df = (-q.rate * q.maturity).exp();
    let forward_intrinsic = (q.s0 - q.strike * df).max(0.0);
    if q.sigma == 0.0 {
        return forward_intrinsic;
    }
    if q.sigma.is_infinite() {
        return q.s0;
    }
    let sd = q.sigma * q.maturity.sqrt();
    let d1 = ((q.s0 / q.strike).ln() + q.rate * q.maturity) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    let price = q.s0 * norm_cdf(d1) - q.strike * df * norm_cdf(d2);
    price.clamp(forward_intrinsic, q.s0)
}

/// Settings of the implied-volatility search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpliedVolOptions {
    pub lo: f64,
    pub hi: f64,
    /// Absolute price tolerance; `None` means `1e-10·s0`.
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for ImpliedVolOptions {
    fn default() -> Self {
        Self { lo: 1e-6, hi: 5.0, tol: None, max_iter: 200 }
    }
}

/// Brent's root finder on `[lo, hi]`; `f(lo)` and `f(hi)` must differ in sign.
///
/// Iterates until the bracket is narrower than `xtol` plus a few ulps of the
/// iterate, or `f` hits zero exactly.
pub fn brent<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::Bracket { lo, hi, f_lo: fa, f_hi: fb });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let half = 0.5 * (c - b);
        if fb == 0.0 || half.abs() <= tol1 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Attempt inverse quadratic interpolation, or secant when only two points are distinct.
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * half * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * half * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * half * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = half;
                e = d;
            }
        } else {
            d = half;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(half) };
        fb = f(b);
    }
    Err(Error::Convergence(format!("Brent did not converge in {max_iter} iterations")))
}

/// Black-Scholes implied volatility of a call price.
///
/// Prices within `1e-12` above the discounted intrinsic value are nudged to
/// `intrinsic + 1e-12` so near-bound quotes still invert.
pub fn implied_vol_brent(
    price: f64,
    s0: f64,
    strike: f64,
    maturity: f64,
    rate: f64,
    opts: &ImpliedVolOptions,
) -> Result<f64> {
    let quote = BsQuote { s0, strike, maturity, rate, sigma: 0.0 };
    quote.validate()?;
    if !(opts.lo >= 0.0 && opts.hi > opts.lo) {
        return Err(Error::InvalidInput(format!("bad vol bracket [{}, {}]", opts.lo, opts.hi)));
    }
    let lower = (s0 - strike * (-rate * maturity).exp()).max(0.0);
    let upper = s0;
    let mut target = price;
    if target >= lower - 1e-12 && target <= lower + 1e-12 {
        target = lower + 1e-12;
    }
    if !(target > lower && target < upper) {
        return Err(Error::InvalidPrice { price, lower, upper });
    }
    let tol = opts.tol.unwrap_or(1e-10 * s0);
    let objective = |sigma: f64| bs_call(&BsQuote { sigma, ..quote }) - target;
    let sigma = brent(objective, opts.lo, opts.hi, 1e-15, opts.max_iter)?;
    let resid = objective(sigma).abs();
    if resid > tol {
        return Err(Error::Convergence(format!(
            "implied vol residual {resid:e} exceeds {tol:e} (K={strike}, T={maturity})"
        )));
    }
    Ok(sigma)
}
