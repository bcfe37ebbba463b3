//! Static-arbitrage functionals of a total-variance surface `ω(k, T)`.
//!
//! `k` is the adjusted log-moneyness `ln(K/s0) − rT` throughout. Derivatives are
//! central finite differences; the `*_from_stencil` functions work on the raw
//! stencil values so callers that differentiate through ω (the GAN trainer) can
//! reuse the exact same arithmetic together with its partial derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surfaces::{SurfaceGrid, SurfaceKind};

/// Violations smaller than this are treated as rounding noise.
pub const VIOLATION_TOL: f64 = 1e-8;

/// Weights of the generator loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    /// Calendar term.
    pub lambda1: f64,
    /// Butterfly term.
    pub lambda2: f64,
    /// Large-moneyness curvature term.
    pub lambda3: f64,
    /// Adversarial term.
    pub lambda4: f64,
}

impl PenaltyWeights {
    pub fn validate(&self, constraints_enabled: bool) -> Result<()> {
        let arb = [self.lambda1, self.lambda2, self.lambda3];
        if arb.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config("penalty weights must be finite and non-negative".into()));
        }
        if constraints_enabled && arb.iter().any(|l| *l <= 0.0) {
            return Err(Error::Config("lambda1..lambda3 must be positive when constraints are enabled".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda4) {
            return Err(Error::Config(format!("lambda4 = {} outside [0, 1]", self.lambda4)));
        }
        Ok(())
    }
}

/// Violation counts of a surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageReport {
    pub butterfly_violations: usize,
    pub calendar_violations: usize,
    pub total_cells: usize,
    pub min_l_but: f64,
    pub min_l_cal: f64,
}

impl ArbitrageReport {
    pub fn empty(total_cells: usize) -> Self {
        Self {
            butterfly_violations: 0,
            calendar_violations: 0,
            total_cells,
            min_l_but: f64::INFINITY,
            min_l_cal: f64::INFINITY,
        }
    }

    pub fn record_butterfly(&mut self, l_but: f64) {
        self.min_l_but = self.min_l_but.min(l_but);
        if l_but < -VIOLATION_TOL {
            self.butterfly_violations += 1;
        }
    }

    pub fn record_calendar(&mut self, l_cal: f64) {
        self.min_l_cal = self.min_l_cal.min(l_cal);
        if l_cal < -VIOLATION_TOL {
            self.calendar_violations += 1;
        }
    }
}

/// Finite-difference probe step and the maturity range the surface may be evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub step: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for Probe {
    fn default() -> Self {
        Self { step: 1e-3, t_min: 0.0, t_max: f64::INFINITY }
    }
}

impl Probe {
    pub fn with_step(step: f64) -> Self {
        Self { step, ..Self::default() }
    }
}

/// `ℓ_but` and its partials with respect to `(ω(k), ω(k+h), ω(k−h))`.
pub fn butterfly_from_stencil(k: f64, w: f64, w_up: f64, w_dn: f64, h: f64) -> (f64, [f64; 3]) {
    let d1 = (w_up - w_dn) / (2.0 * h);
    let d2 = (w_up - 2.0 * w + w_dn) / (h * h);
    let a = 1.0 - k * d1 / (2.0 * w);
    let value = a * a - 0.25 * d1 * (1.0 / w + 0.25) + 0.5 * d2;

    let dl_dd1 = -a * k / w - 0.25 * (1.0 / w + 0.25);
    let dl_dw = a * k * d1 / (w * w) + 0.25 * d1 / (w * w);
    let dl_dd2 = 0.5;
    let grad = [
        dl_dw - 2.0 * dl_dd2 / (h * h),
        dl_dd1 / (2.0 * h) + dl_dd2 / (h * h),
        -dl_dd1 / (2.0 * h) + dl_dd2 / (h * h),
    ];
    (value, grad)
}

/// `|∂²_kk ω|` and its partials with respect to `(ω(k), ω(k+h), ω(k−h))`.
pub fn curvature_from_stencil(w: f64, w_up: f64, w_dn: f64, h: f64) -> (f64, [f64; 3]) {
    let d2 = (w_up - 2.0 * w + w_dn) / (h * h);
    let s = if d2 > 0.0 {
        1.0
    } else if d2 < 0.0 {
        -1.0
    } else {
        0.0
    };
    (d2.abs(), [-2.0 * s / (h * h), s / (h * h), s / (h * h)])
}

/// `ℓ_cal = ∂_T ω` from values at `T + up` and `T − down` (one of the offsets may be zero).
pub fn calendar_from_stencil(w_later: f64, w_earlier: f64, span: f64) -> (f64, [f64; 2]) {
    ((w_later - w_earlier) / span, [1.0 / span, -1.0 / span])
}

/// Maturity offsets `(up, down)` for a calendar difference at `t`.
pub fn calendar_offsets(t: f64, probe: &Probe) -> Result<(f64, f64)> {
    let h = probe.step;
    let down_ok = t - h >= probe.t_min;
    let up_ok = t + h <= probe.t_max;
    match (down_ok, up_ok) {
        (true, true) => Ok((h, h)),
        (false, true) => Ok((h, 0.0)),
        (true, false) => Ok((0.0, h)),
        (false, false) => Err(Error::Domain(format!(
            "maturity probe around T={t} leaves [{}, {}] on both sides",
            probe.t_min, probe.t_max
        ))),
    }
}

/// Calendar functional `∂_T ω` at `(k, t)`: central, or one-sided at the domain edges.
pub fn l_cal<F>(omega: F, k: f64, t: f64, probe: &Probe) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let (up, down) = calendar_offsets(t, probe)?;
    let later = omega(k, t + up)?;
    let earlier = omega(k, t - down)?;
    Ok(calendar_from_stencil(later, earlier, up + down).0)
}

/// Butterfly functional at `(k, t)` with central differences in `k`.
pub fn l_but<F>(omega: F, k: f64, t: f64, probe: &Probe) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let h = probe.step;
    let w = omega(k, t)?;
    if !(w > 0.0) {
        return Err(Error::Domain(format!("total variance {w} is not positive at k={k}, T={t}")));
    }
    let (up, dn) = (omega(k + h, t)?, omega(k - h, t)?);
    Ok(butterfly_from_stencil(k, w, up, dn, h).0)
}

/// Batch averages of the three arbitrage penalties.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTerms {
    /// Mean calendar hinge `max(0, −ℓ_cal)`.
    pub calendar: f64,
    /// Mean butterfly hinge `max(0, −ℓ_but)`.
    pub butterfly: f64,
    /// Mean absolute curvature `|∂²_kk ω|`.
    pub large_moneyness: f64,
}

/// Mean penalty terms over `points` (pairs of `(k, T)`).
pub fn penalty_terms<F>(omega: F, points: &[(f64, f64)], probe: &Probe) -> Result<PenaltyTerms>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    if points.is_empty() {
        return Err(Error::InvalidInput("penalty_terms needs at least one sample point".into()));
    }
    let h = probe.step;
    let mut sum = PenaltyTerms::default();
    for &(k, t) in points {
        sum.calendar += (-l_cal(&omega, k, t, probe)?).max(0.0);
        let w = omega(k, t)?;
        if !(w > 0.0) {
            return Err(Error::Domain(format!("total variance {w} is not positive at k={k}, T={t}")));
        }
        let (up, dn) = (omega(k + h, t)?, omega(k - h, t)?);
        sum.butterfly += (-butterfly_from_stencil(k, w, up, dn, h).0).max(0.0);
        sum.large_moneyness += curvature_from_stencil(w, up, dn, h).0;
    }
    let m = points.len() as f64;
    Ok(PenaltyTerms {
        calendar: sum.calendar / m,
        butterfly: sum.butterfly / m,
        large_moneyness: sum.large_moneyness / m,
    })
}

/// Grid-based violation count of an implied-volatility surface.
///
/// Butterfly: `ℓ_but` from non-uniform three-point differences of `ω` in the
/// adjusted log-moneyness of each maturity column (interior strikes only).
/// Calendar: each node's `ω` against the previous maturity column interpolated
/// linearly to the same adjusted log-moneyness (identical to a same-strike
/// comparison when `rate = 0`). Cells that are not valid are skipped.
pub fn audit_surface(iv: &SurfaceGrid, s0: f64, rate: f64) -> Result<ArbitrageReport> {
    if iv.kind != SurfaceKind::ImpliedVol {
        return Err(Error::InvalidInput(format!("audit_surface needs an implied_vol grid, got {}", iv.kind)));
    }
    let (ni, nj) = (iv.n_strikes(), iv.n_maturities());
    if ni < 3 || nj < 2 {
        return Err(Error::Shape(format!("audit needs >= 3 strikes and >= 2 maturities, got {ni}x{nj}")));
    }
    let total = iv.status.iter().filter(|s| **s == crate::surfaces::CellStatus::Valid).count();
    let mut report = ArbitrageReport::empty(total);
    let omega = |i: usize, j: usize| iv.values[[i, j]].powi(2) * iv.maturities[j];
    let k_adj = |i: usize, j: usize| (iv.strikes[i] / s0).ln() - rate * iv.maturities[j];

    for j in 0..nj {
        for i in 1..ni - 1 {
            if !(iv.is_valid(i - 1, j) && iv.is_valid(i, j) && iv.is_valid(i + 1, j)) {
                continue;
            }
            let w = omega(i, j);
            if !(w > 0.0) {
                report.record_butterfly(f64::NEG_INFINITY);
                continue;
            }
            let (k0, k1, k2) = (k_adj(i - 1, j), k_adj(i, j), k_adj(i + 1, j));
            let (hl, hr) = (k1 - k0, k2 - k1);
            let (wl, wr) = (omega(i - 1, j), omega(i + 1, j));
            let d1 = (-hr / (hl * (hl + hr))) * wl + ((hr - hl) / (hl * hr)) * w + (hl / (hr * (hl + hr))) * wr;
            let d2 = 2.0 * (hl * wr - (hl + hr) * w + hr * wl) / (hl * hr * (hl + hr));
            let a = 1.0 - k1 * d1 / (2.0 * w);
            report.record_butterfly(a * a - 0.25 * d1 * (1.0 / w + 0.25) + 0.5 * d2);
        }
    }

    for j in 1..nj {
        let prev: Vec<(f64, f64)> = (0..ni)
            .filter(|&i| iv.is_valid(i, j - 1))
            .map(|i| (k_adj(i, j - 1), omega(i, j - 1)))
            .collect();
        for i in 0..ni {
            if !iv.is_valid(i, j) {
                continue;
            }
            let k = k_adj(i, j);
            if let Some(w_prev) = interpolate(&prev, k) {
                report.record_calendar(omega(i, j) - w_prev);
            }
        }
    }
    Ok(report)
}

/// Linear interpolation on ascending `(x, y)` knots; `None` outside their range.
fn interpolate(knots: &[(f64, f64)], x: f64) -> Option<f64> {
    let pos = knots.partition_point(|(kx, _)| *kx < x);
    if pos < knots.len() && knots[pos].0 == x {
        return Some(knots[pos].1);
    }
    if pos == 0 || pos == knots.len() {
        return None;
    }
    let ((x0, y0), (x1, y1)) = (knots[pos - 1], knots[pos]);
    Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfaces::linspace;

    fn flat(level: f64) -> impl Fn(f64, f64) -> Result<f64> {
        move |_, _| Ok(level)
    }

    #[test]
    fn calendar_of_linear_variance() {
        let v = l_cal(|_, t| Ok(0.04 * t), 0.1, 1.0, &Probe::default()).unwrap();
        assert!((v - 0.04).abs() < 1e-9);
        assert_eq!(l_cal(flat(0.3), 0.0, 1.0, &Probe::default()).unwrap(), 0.0);
    }

    #[test]
    fn calendar_is_one_sided_at_edges() {
        let probe = Probe { step: 1e-3, t_min: 0.5, t_max: 2.0 };
        let v = l_cal(|_, t| Ok(0.04 * t * t), 0.0, 0.5, &probe).unwrap();
        assert!((v - 0.04 * (2.0 * 0.5 + 1e-3)).abs() < 1e-12);
        let tight = Probe { step: 1e-3, t_min: 1.0, t_max: 1.0 };
        assert!(l_cal(flat(0.1), 0.0, 1.0, &tight).is_err());
    }

    #[test]
    fn butterfly_of_flat_variance_is_one() {
        for h in [1e-3, 0.1, 0.5] {
            assert_eq!(l_but(flat(0.07), 0.3, 1.0, &Probe::with_step(h)).unwrap(), 1.0);
        }
    }

    #[test]
    fn butterfly_hand_value() {
        let v = l_but(|k, _| Ok(0.04 + 0.01 * k), 0.0, 1.0, &Probe::default()).unwrap();
        assert!((v - 0.936875).abs() < 1e-6);
    }

    #[test]
    fn butterfly_rejects_non_positive_variance() {
        assert!(matches!(l_but(flat(0.0), 0.0, 1.0, &Probe::default()), Err(Error::Domain(_))));
        assert!(matches!(l_but(flat(-0.1), 0.0, 1.0, &Probe::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn penalties_vanish_for_constant_vol() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (-0.5 + 0.05 * i as f64, 0.5 + 0.07 * i as f64)).collect();
        let terms = penalty_terms(|_, t| Ok(0.09 * t), &pts, &Probe::default()).unwrap();
        assert_eq!(terms.calendar, 0.0);
        assert_eq!(terms.butterfly, 0.0);
        assert!(terms.large_moneyness < 1e-12);
    }

    #[test]
    fn decreasing_variance_activates_calendar_hinge() {
        let pts = [(0.0, 1.0), (0.2, 1.5)];
        let terms = penalty_terms(|_, t| Ok(1.0 - 0.1 * t), &pts, &Probe::default()).unwrap();
        assert!((terms.calendar - 0.1).abs() < 1e-9);
    }

    #[test]
    fn stencil_gradients_match_differences() {
        let (k, w, up, dn, h) = (0.3, 0.05, 0.052, 0.0495, 1e-2);
        let (_, g) = butterfly_from_stencil(k, w, up, dn, h);
        let eps = 1e-7;
        let f = |w: f64, up: f64, dn: f64| butterfly_from_stencil(k, w, up, dn, h).0;
        let fd = [
            (f(w + eps, up, dn) - f(w - eps, up, dn)) / (2.0 * eps),
            (f(w, up + eps, dn) - f(w, up - eps, dn)) / (2.0 * eps),
            (f(w, up, dn + eps) - f(w, up, dn - eps)) / (2.0 * eps),
        ];
        for (a, b) in g.iter().zip(fd) {
            assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn audit_flat_surface_is_clean() {
        let iv = SurfaceGrid::from_fn(linspace(0.5, 2.5, 15), linspace(0.5, 2.0, 6), SurfaceKind::ImpliedVol, |_, _| 0.3)
            .unwrap();
        let rep = audit_surface(&iv, 1.0, 0.02).unwrap();
        assert_eq!((rep.butterfly_violations, rep.calendar_violations), (0, 0));
        assert_eq!(rep.total_cells, 90);
    }

    #[test]
    fn audit_counts_decreasing_pairs() {
        let mut iv = SurfaceGrid::from_fn(linspace(0.5, 2.5, 9), linspace(0.5, 2.0, 5), SurfaceKind::ImpliedVol, |_, _| 0.3)
            .unwrap();
        // strike row 4: total variance 0.09·T, then falls twice
        let ts = iv.maturities.clone();
        let target_w = [0.045, 0.06, 0.05, 0.04, 0.2];
        for j in 0..5 {
            iv.values[[4, j]] = (target_w[j] / ts[j]).sqrt();
        }
        let rep = audit_surface(&iv, 1.0, 0.0).unwrap();
        assert_eq!(rep.calendar_violations, 2);
    }
}
