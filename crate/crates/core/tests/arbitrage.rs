use proptest::prelude::*;
use volgan::arbitrage::{l_cal, penalty_terms, Probe};

/// Quadratic test surface in (k, T).
fn quad(k: f64, t: f64) -> f64 {
    0.3 + 0.02 * t + 0.03 * k - 2.4 * k * k + 0.01 * k * t - 0.02 * t * t
}

/// Independent recomputation of the three penalties with analytic derivatives of `quad`.
/// Central differences are exact for quadratics, so both must agree to rounding.
fn brute_force(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let (mut lc, mut lb, mut li) = (0.0, 0.0, 0.0);
    for &(k, t) in points {
        let w = quad(k, t);
        let dw_dt = 0.02 + 0.01 * k - 0.04 * t;
        let dw_dk = 0.03 - 4.8 * k + 0.01 * t;
        let d2w_dk2 = -4.8;
        let lbut = (1.0 - k * dw_dk / (2.0 * w)).powi(2) - dw_dk / 4.0 * (1.0 / w + 0.25) + d2w_dk2 / 2.0;
        lc += f64::max(0.0, -dw_dt);
        lb += f64::max(0.0, -lbut);
        li += d2w_dk2.abs();
    }
    let m = points.len() as f64;
    (lc / m, lb / m, li / m)
}

#[test]
fn quadratic_surface_matches_brute_force() {
    let points: Vec<(f64, f64)> = (0..25).map(|i| (-0.3 + 0.025 * i as f64, 0.4 + 0.05 * i as f64)).collect();
    let terms = penalty_terms(|k, t| Ok(quad(k, t)), &points, &Probe::default()).unwrap();
    let (lc, lb, li) = brute_force(&points);
    assert!(lc > 0.0 && lb > 0.0);
    assert!((terms.calendar - lc).abs() < 1e-9, "{} vs {lc}", terms.calendar);
    assert!((terms.butterfly - lb).abs() < 1e-7, "{} vs {lb}", terms.butterfly);
    assert!((terms.large_moneyness - li).abs() < 1e-6, "{} vs {li}", terms.large_moneyness);
}

#[test]
fn calendar_matches_analytic_derivative() {
    // Central differences are exact on t², so any step reproduces 0.08.
    for h in [1e-1, 1e-2, 1e-3] {
        let v = l_cal(|_, t| Ok(0.04 * t * t), 0.0, 1.0, &Probe::with_step(h)).unwrap();
        assert!((v - 0.08).abs() < 1e-9, "h={h}: {v}");
    }
    // On t³ the error shrinks like h².
    let err = |h: f64| (l_cal(|_, t| Ok(0.04 * t.powi(3)), 0.0, 1.0, &Probe::with_step(h)).unwrap() - 0.12).abs();
    let ratio = err(1e-2) / err(5e-3);
    assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
}

proptest! {
    #[test]
    fn penalties_are_permutation_and_duplication_invariant(
        pts in prop::collection::vec((-0.6f64..0.6, 0.3f64..2.5), 1..30),
        seed in 0u64..1000,
    ) {
        let probe = Probe::default();
        let f = |k: f64, t: f64| Ok(quad(k, t).max(1e-3) + 0.1);
        let base = penalty_terms(f, &pts, &probe).unwrap();
        let mut shuffled = pts.clone();
        let n = shuffled.len();
        for i in 0..n {
            shuffled.swap(i, (seed as usize + 7 * i) % n);
        }
        let perm = penalty_terms(f, &shuffled, &probe).unwrap();
        let doubled: Vec<_> = pts.iter().chain(pts.iter()).copied().collect();
        let dup = penalty_terms(f, &doubled, &probe).unwrap();
        for (a, b) in [(base, perm), (base, dup)] {
            prop_assert!((a.calendar - b.calendar).abs() <= 1e-12 * (1.0 + a.calendar));
            prop_assert!((a.butterfly - b.butterfly).abs() <= 1e-12 * (1.0 + a.butterfly));
            prop_assert!((a.large_moneyness - b.large_moneyness).abs() <= 1e-10 * (1.0 + a.large_moneyness));
        }
    }
}
