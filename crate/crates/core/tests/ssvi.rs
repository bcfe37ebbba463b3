use volgan::heston::{cos_call_prices, CosConfig, HestonParams};
use volgan::blackscholes::{implied_vol_brent, ImpliedVolOptions};
use volgan::ssvi::{heston_like_phi, ssvi_fit, ssvi_total_variance, SsviParams, ThetaCurve};
use volgan::surfaces::{linspace, SurfaceGrid, SurfaceKind};

// Reference values from a 40-digit evaluation of the closed forms.
const PHI_LAMBDA1_THETA04: f64 = 0.439_500_287_722_745_6;
const W_RHO_M04_K05: f64 = 0.369_234_335_974_145_7;

fn flat_theta(theta: f64) -> ThetaCurve {
    ThetaCurve::new(vec![1.0], vec![theta]).unwrap()
}

#[test]
fn phi_matches_extended_precision() {
    assert!((heston_like_phi(0.4, 1.0) - PHI_LAMBDA1_THETA04).abs() < 1e-15);
}

#[test]
fn total_variance_matches_extended_precision() {
    let p = SsviParams { rho: -0.4, lambda: 1.0, theta_curve: flat_theta(0.4) };
    assert!((ssvi_total_variance(&p, 0.5, 1.0) - W_RHO_M04_K05).abs() < 1e-15);
}

fn synthetic_grid(truth: &SsviParams) -> SurfaceGrid {
    let strikes: Vec<f64> = linspace(-0.7, 0.9, 33).into_iter().map(f64::exp).collect();
    let mut strikes = strikes;
    strikes[14] = 1.0; // make sure an exact ATM strike is present
    strikes.sort_by(f64::total_cmp);
    strikes.dedup();
    truth.implied_vol_grid(1.0, &strikes, &linspace(0.25, 2.0, 8)).unwrap()
}

#[test]
fn self_fit_recovers_parameters() {
    let thetas: Vec<f64> = linspace(0.25, 2.0, 8).iter().map(|t| 0.04 * t + 0.01 * t * t).collect();
    let truth = SsviParams {
        rho: -0.4,
        lambda: 2.0,
        theta_curve: ThetaCurve::new(linspace(0.25, 2.0, 8), thetas).unwrap(),
    };
    let grid = synthetic_grid(&truth);
    let fit = ssvi_fit(&grid, 1.0).unwrap();
    assert!((fit.rho - truth.rho).abs() < 1e-3, "rho {}", fit.rho);
    assert!((fit.lambda - truth.lambda).abs() < 1e-3, "lambda {}", fit.lambda);
}

#[test]
fn flat_surface_fits_without_skew() {
    let strikes: Vec<f64> = linspace(-0.6, 0.6, 25).into_iter().map(f64::exp).collect();
    let grid = SurfaceGrid::from_fn(strikes, linspace(0.5, 2.0, 6), SurfaceKind::ImpliedVol, |_, _| 0.25).unwrap();
    let fit = ssvi_fit(&grid, 1.0).unwrap();
    assert!(fit.rho.abs() < 1e-2, "rho {}", fit.rho);
}

#[test]
fn fitted_heston_surface_is_calendar_free() {
    let p = HestonParams::out_of_training();
    let strikes = linspace(0.5, 2.5, 21);
    let maturities = linspace(0.5, 2.0, 8);
    let mut values = ndarray::Array2::zeros((strikes.len(), maturities.len()));
    for (j, &t) in maturities.iter().enumerate() {
        let prices = cos_call_prices(&p, &strikes, t, &CosConfig::default()).unwrap();
        for (i, (&k, &c)) in strikes.iter().zip(&prices).enumerate() {
            values[[i, j]] = implied_vol_brent(c, 1.0, k, t, p.r, &ImpliedVolOptions::default()).unwrap();
        }
    }
    let iv = SurfaceGrid::new(strikes.clone(), maturities.clone(), values, SurfaceKind::ImpliedVol).unwrap();
    let fit = ssvi_fit(&iv, 1.0).unwrap();
    assert!(fit.rho > -0.99 && fit.rho <= 0.0);
    for &k in &strikes {
        let ws: Vec<f64> = maturities.iter().map(|&t| ssvi_total_variance(&fit, k.ln(), t)).collect();
        assert!(ws.windows(2).all(|w| w[1] >= w[0]), "calendar violation at K={k}: {ws:?}");
    }
}
