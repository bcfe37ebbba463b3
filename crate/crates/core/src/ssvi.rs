//! SSVI total-variance surfaces with the Heston-like curvature function.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::{join_list, KvMap};
use crate::surfaces::{SurfaceGrid, SurfaceKind};

/// ATM total variance as a function of maturity, linear between knots.
///
/// Before the first knot θ is scaled proportionally to `T` (so θ → 0 as T → 0);
/// after the last knot the final segment's slope is continued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaCurve {
    maturities: Vec<f64>,
    thetas: Vec<f64>,
}

impl ThetaCurve {
    pub fn new(maturities: Vec<f64>, thetas: Vec<f64>) -> Result<Self> {
        if maturities.is_empty() || maturities.len() != thetas.len() {
            return Err(Error::InvalidInput("theta curve needs matching, non-empty knots".into()));
        }
        if maturities.iter().any(|t| !(*t > 0.0 && t.is_finite())) || maturities.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("theta maturities must be positive and strictly ascending".into()));
        }
        if thetas.iter().any(|th| !(*th > 0.0 && th.is_finite())) || thetas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("theta values must be positive and non-decreasing".into()));
        }
        Ok(Self { maturities, thetas })
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn at(&self, t: f64) -> f64 {
        let (ts, th) = (&self.maturities, &self.thetas);
        let n = ts.len();
        if t <= ts[0] {
            return th[0] * t / ts[0];
        }
        if n == 1 {
            return th[0] * t / ts[0];
        }
        let seg = match ts.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return th[i],
            Err(i) if i >= n => n - 2,
            Err(i) => i - 1,
        };
        let w = (t - ts[seg]) / (ts[seg + 1] - ts[seg]);
        th[seg] + w * (th[seg + 1] - th[seg])
    }
}

/// SSVI parameters: skew correlation, curvature shape and the ATM variance curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsviParams {
    pub rho: f64,
    pub lambda: f64,
    pub theta_curve: ThetaCurve,
}

/// Heston-like curvature `φ(θ) = (1 − (1 − e^{−λθ})/(λθ)) / (λθ)`.
pub fn heston_like_phi(theta: f64, lambda: f64) -> f64 {
    let x = lambda * theta;
    if x < 1e-4 {
        return 0.5 - x / 6.0;
    }
    // 1 − e^{−x} = −expm1(−x) avoids cancellation for moderate x
    (1.0 - (-(-x).exp_m1()) / x) / x
}

/// SSVI total variance `w(k, θ_T)` at spot log-moneyness `k_log = ln(K/s0)`.
pub fn ssvi_total_variance(p: &SsviParams, k_log: f64, maturity: f64) -> f64 {
    let theta = p.theta_curve.at(maturity);
    ssvi_slice(theta, p.rho, p.lambda, k_log)
}

fn ssvi_slice(theta: f64, rho: f64, lambda: f64, k: f64) -> f64 {
    let phi = heston_like_phi(theta, lambda);
    let pk = phi * k;
    0.5 * theta * (1.0 + rho * pk + ((pk + rho).powi(2) + (1.0 - rho * rho)).sqrt())
}

impl SsviParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > -1.0 && self.rho < 1.0) || !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("SSVI rho={} lambda={} out of range", self.rho, self.lambda)));
        }
        Ok(())
    }

    /// Implied volatility surface on the given axes.
    pub fn implied_vol_grid(&self, s0: f64, strikes: &[f64], maturities: &[f64]) -> Result<SurfaceGrid> {
        SurfaceGrid::from_fn(strikes.to_vec(), maturities.to_vec(), SurfaceKind::ImpliedVol, |k, t| {
            (ssvi_total_variance(self, (k / s0).ln(), t) / t).sqrt()
        })
    }

    /// Flat `key = value` text form.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rho = {}", self.rho);
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "theta_maturities = {}", join_list(&self.theta_curve.maturities));
        let _ = writeln!(out, "theta_values = {}", join_list(&self.theta_curve.thetas));
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let map = KvMap::parse(text)?;
        map.check_known(&["rho", "lambda", "theta_maturities", "theta_values"])?;
        let p = SsviParams {
            rho: map.required("rho")?,
            lambda: map.required("lambda")?,
            theta_curve: ThetaCurve::new(map.list("theta_maturities")?, map.list("theta_values")?)?,
        };
        p.validate()?;
        Ok(p)
    }
}

const RHO_BOUNDS: (f64, f64) = (-0.99, 0.0);
const LAMBDA_BOUNDS: (f64, f64) = (1e-3, 50.0);

/// Nelder–Mead simplex minimisation with a projection applied to every trial point.
fn nelder_mead<F, P>(f: F, project: P, start: [[f64; 2]; 3], max_iter: usize, ftol: f64) -> ([f64; 2], f64)
where
    F: Fn([f64; 2]) -> f64,
    P: Fn([f64; 2]) -> [f64; 2],
{
    let mut simplex: Vec<([f64; 2], f64)> = start.iter().map(|&x| (project(x), f(project(x)))).collect();
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| project([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[2].1);
        let spread = (simplex[0].0[0] - simplex[2].0[0]).abs().max((simplex[0].0[1] - simplex[2].0[1]).abs());
        if (worst - best).abs() <= ftol * (1.0 + best.abs()) && spread < 1e-10 {
            break;
        }
        let centroid = [0.5 * (simplex[0].0[0] + simplex[1].0[0]), 0.5 * (simplex[0].0[1] + simplex[1].0[1])];
        let reflected = lerp(centroid, simplex[2].0, -1.0);
        let fr = f(reflected);
        if fr < simplex[0].1 {
            let expanded = lerp(centroid, simplex[2].0, -2.0);
            let fe = f(expanded);
            simplex[2] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (reflected, fr);
        } else {
            let (toward, ft) = if fr < simplex[2].1 { (reflected, fr) } else { (simplex[2].0, simplex[2].1) };
            let contracted = lerp(centroid, toward, 0.5);
            let fc = f(contracted);
            if fc < ft {
                simplex[2] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let x = lerp(best, v.0, 0.5);
                    *v = (x, f(x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1)
}

/// Calibrates SSVI to an implied-volatility grid.
///
/// θ is pinned to the ATM column (the strike nearest `s0`, which must lie
/// within 1% of it), made non-decreasing by a running maximum, and `(ρ, λ)`
/// minimise the squared total-variance error over all valid cells.
pub fn ssvi_fit(iv: &SurfaceGrid, s0: f64) -> Result<SsviParams> {
    if iv.kind != SurfaceKind::ImpliedVol {
        return Err(Error::InvalidInput(format!("ssvi_fit needs an implied_vol grid, got {}", iv.kind)));
    }
    let atm = iv
        .strikes
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 / s0 - 1.0).abs().total_cmp(&(b.1 / s0 - 1.0).abs()))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Fit("empty strike axis".into()))?;
    if (iv.strikes[atm] / s0 - 1.0).abs() > 0.01 {
        return Err(Error::Fit(format!("no strike within 1% of spot (nearest {})", iv.strikes[atm])));
    }
    let mut knots_t = Vec::new();
    let mut knots_theta: Vec<f64> = Vec::new();
    for (j, &t) in iv.maturities.iter().enumerate() {
        if !iv.is_valid(atm, j) {
            continue;
        }
        let sigma = iv.values[[atm, j]];
        let theta = (sigma * sigma * t).max(knots_theta.last().copied().unwrap_or(0.0));
        if theta <= 0.0 {
            return Err(Error::Fit(format!("non-positive ATM variance at T={t}")));
        }
        knots_t.push(t);
        knots_theta.push(theta);
    }
    let theta_curve = ThetaCurve::new(knots_t, knots_theta)?;

    let cells: Vec<(f64, f64, f64)> = iv
        .values
        .indexed_iter()
        .filter(|((i, j), _)| iv.is_valid(*i, *j))
        .map(|((i, j), v)| {
            let t = iv.maturities[j];
            ((iv.strikes[i] / s0).ln(), theta_curve.at(t), v * v * t)
        })
        .collect();
    let objective = |x: [f64; 2]| -> f64 {
        let (rho, lambda) = (x[0], x[1].exp());
        cells.iter().map(|&(k, theta, w)| (ssvi_slice(theta, rho, lambda, k) - w).powi(2)).sum()
    };
    let project = |x: [f64; 2]| {
        [
            x[0].clamp(RHO_BOUNDS.0, RHO_BOUNDS.1),
            x[1].clamp(LAMBDA_BOUNDS.0.ln(), LAMBDA_BOUNDS.1.ln()),
        ]
    };
    let starts = [
        [[-0.5, 0.0], [-0.3, 0.0], [-0.5, 1.0]],
        [[-0.1, 2.5], [-0.3, 2.5], [-0.1, 3.5]],
        [[-0.8, -2.0], [-0.6, -2.0], [-0.8, -1.0]],
    ];
    let mut best: Option<([f64; 2], f64)> = None;
    for start in starts {
        let mut result = nelder_mead(objective, project, start, 2000, 1e-15);
        // A restart around the optimum guards against premature simplex collapse.
        let x = result.0;
        let restart = [x, project([x[0] + 0.05, x[1]]), project([x[0], x[1] + 0.2])];
        result = nelder_mead(objective, project, restart, 2000, 1e-15);
        if best.as_ref().is_none_or(|b| result.1 < b.1) {
            best = Some(result);
        }
    }
    let (x, sse) = best.expect("at least one start");
    if !sse.is_finite() {
        return Err(Error::Fit("SSVI objective is not finite".into()));
    }
    Ok(SsviParams { rho: x[0], lambda: x[1].exp(), theta_curve })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rho: f64, lambda: f64) -> SsviParams {
        SsviParams {
            rho,
            lambda,
            theta_curve: ThetaCurve::new(vec![0.5, 1.0, 2.0], vec![0.1, 0.2, 0.4]).unwrap(),
        }
    }

    #[test]
    fn atm_total_variance_is_theta() {
        for &(rho, lambda) in &[(-0.4, 1.0), (-0.9, 0.01), (0.0, 30.0)] {
            let p = params(rho, lambda);
            assert_eq!(ssvi_total_variance(&p, 0.0, 1.0), 0.2);
        }
    }

    #[test]
    fn symmetric_without_correlation() {
        let p = params(0.0, 2.0);
        for x in [0.1, 0.5, 1.3] {
            assert!((ssvi_total_variance(&p, x, 1.5) - ssvi_total_variance(&p, -x, 1.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_limits() {
        assert!((heston_like_phi(1e-9, 1.0) - 0.5).abs() < 1e-9);
        assert!(heston_like_phi(1e6, 1.0) < 1e-5);
        for &(th, l) in &[(1e-6, 1e-3), (0.04, 1.0), (0.4, 50.0), (2.0, 0.3)] {
            let phi = heston_like_phi(th, l);
            assert!(phi > 0.0 && phi <= 0.5);
        }
    }

    #[test]
    fn phi_series_matches_direct_form_at_switch() {
        let x = 1e-4;
        let series = 0.5 - x / 6.0;
        let direct = heston_like_phi(1.0, x * 1.000_001);
        assert!((series - direct).abs() < 1e-8);
    }

    #[test]
    fn theta_curve_interpolates_and_extrapolates() {
        let c = ThetaCurve::new(vec![0.5, 1.0, 2.0], vec![0.1, 0.2, 0.4]).unwrap();
        assert_eq!(c.at(1.0), 0.2);
        assert!((c.at(1.5) - 0.3).abs() < 1e-15);
        assert!((c.at(0.25) - 0.05).abs() < 1e-15);
        assert!((c.at(3.0) - 0.6).abs() < 1e-15);
        assert!(ThetaCurve::new(vec![1.0, 2.0], vec![0.3, 0.2]).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let p = params(-0.37, 1.7);
        let back = SsviParams::from_kv(&p.to_kv()).unwrap();
        assert_eq!(back, p);
        assert!(SsviParams::from_kv("rho = 0.1").is_err());
    }

    #[test]
    fn fit_requires_atm_strike() {
        let grid = SurfaceGrid::from_fn(vec![0.5, 0.8, 1.2], vec![1.0], SurfaceKind::ImpliedVol, |_, _| 0.2).unwrap();
        assert!(matches!(ssvi_fit(&grid, 1.0), Err(Error::Fit(_))));
    }
}
