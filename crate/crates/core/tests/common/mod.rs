//! Independent reference implementations shared by integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use volgan::heston::HestonParams;

/// Right-hand side of the Heston Riccati system for `(A, B)` in time-to-maturity.
fn riccati(p: &HestonParams, psi: f64, b: Complex64) -> (Complex64, Complex64) {
    let i = Complex64::i();
    let db = -0.5 * (psi * psi + i * psi) - (p.kappa - i * p.rho * p.gamma * psi) * b
        + 0.5 * p.gamma * p.gamma * b * b;
    let da = i * psi * p.r + p.kappa * p.v_bar * b;
    (da, db)
}

/// Characteristic function of `ln S_T` from adaptive Dormand–Prince integration of the
/// Riccati ODEs. The system is autonomous, so stage times are not needed.
pub fn charfn_by_ode(p: &HestonParams, v_t: f64, tau: f64, psi: f64) -> Complex64 {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let (mut a, mut b) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    let mut t = 0.0;
    let mut h = 1e-4;
    let tol = 1e-13;
    while t < tau {
        if t + h > tau {
            h = tau - t;
        }
        let mut ka = [Complex64::new(0.0, 0.0); 7];
        let mut kb = [Complex64::new(0.0, 0.0); 7];
        for s in 0..7 {
            let mut bs = b;
            for (m, coef) in A[s].iter().enumerate().take(s) {
                bs += h * coef * kb[m];
            }
            let (da, db) = riccati(p, psi, bs);
            ka[s] = da;
            kb[s] = db;
        }
        let (mut a5, mut b5, mut a4, mut b4) = (a, b, a, b);
        for s in 0..7 {
            a5 += h * B5[s] * ka[s];
            b5 += h * B5[s] * kb[s];
            a4 += h * B4[s] * ka[s];
            b4 += h * B4[s] * kb[s];
        }
        let err = (a5 - a4).norm().max((b5 - b4).norm());
        let scale = tol * (1.0 + a5.norm().max(b5.norm()));
        if err <= scale {
            t += h;
            a = a5;
            b = b5;
        }
        let factor = if err == 0.0 { 5.0 } else { 0.9 * (scale / err).powf(0.2) };
        h *= factor.clamp(0.2, 5.0);
    }
    (a + b * v_t + Complex64::new(0.0, psi * p.s0.ln())).exp()
}

/// Monte-Carlo call price: full-truncation Euler on variance, log-Euler on spot.
/// Returns `(price, standard_error)`.
pub fn call_by_monte_carlo(p: &HestonParams, strike: f64, maturity: f64, paths: usize, steps: usize, seed: u64) -> (f64, f64) {
    let dt = maturity / steps as f64;
    let sqrt_dt = dt.sqrt();
    let chunks = 64;
    let per_chunk = paths / chunks;
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(c as u64));
            let (mut s1, mut s2) = (0.0, 0.0);
            let rho_c = (1.0 - p.rho * p.rho).sqrt();
            for _ in 0..per_chunk {
                let mut x = p.s0.ln();
                let mut v = p.v0;
                for _ in 0..steps {
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    let zv = p.rho * z1 + rho_c * z2;
                    let vp = v.max(0.0);
                    let sv = vp.sqrt();
                    x += (p.r - 0.5 * vp) * dt + sv * sqrt_dt * z1;
                    v += p.kappa * (p.v_bar - vp) * dt + p.gamma * sv * sqrt_dt * zv;
                }
                let payoff = (x.exp() - strike).max(0.0);
                s1 += payoff;
                s2 += payoff * payoff;
            }
            (s1, s2)
        })
        .collect();
    let n = (per_chunk * chunks) as f64;
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let mean = s1 / n;
    let var = (s2 / n - mean * mean) * n / (n - 1.0);
    let df = (-p.r * maturity).exp();
    (df * mean, df * (var / n).sqrt())
}

/// Black-Scholes call by integrating the discounted payoff against the lognormal density
/// (composite Simpson rule in the standard-normal variable).
pub fn call_by_quadrature(s0: f64, strike: f64, maturity: f64, rate: f64, sigma: f64) -> f64 {
    let n = 200_000;
    let (lo, hi) = (-12.0, 12.0);
    let h = (hi - lo) / n as f64;
    let sd = sigma * maturity.sqrt();
    let drift = (rate - 0.5 * sigma * sigma) * maturity;
    let f = |z: f64| {
        let st = s0 * (drift + sd * z).exp();
        (st - strike).max(0.0) * (-0.5 * z * z).exp()
    };
    let mut sum = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(lo + i as f64 * h);
    }
    (-rate * maturity).exp() * sum * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
}
