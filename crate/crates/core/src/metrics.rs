//! Volatility error metrics and repricing-error statistics.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::blackscholes::{bs_call, BsQuote};
use crate::error::{Error, Result};
use crate::surfaces::{csv_err, SurfaceGrid, SurfaceKind};

/// Mean absolute error and mean absolute percentage error (as a fraction) of `predicted` against `truth`.
pub fn mae_mape(predicted: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::Shape(format!("{} predictions vs {} truths", predicted.len(), truth.len())));
    }
    let n = truth.len() as f64;
    let (mut mae, mut mape) = (0.0, 0.0);
    for (&p, &t) in predicted.iter().zip(truth) {
        if t == 0.0 {
            return Err(Error::Domain("MAPE is undefined for a zero true volatility".into()));
        }
        let e = (t - p).abs();
        mae += e;
        mape += e / t.abs();
    }
    Ok((mae / n, mape / n))
}

/// Per-cell relative repricing error statistics across parameter sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepriceStats {
    pub strikes: Vec<f64>,
    pub maturities: Vec<f64>,
    /// Mean relative error per cell (`NaN` where no set contributed).
    pub arpe: Array2<f64>,
    /// Maximum relative error per cell.
    pub mrpe: Array2<f64>,
    /// Population standard deviation of the relative error per cell.
    pub std: Array2<f64>,
    pub samples: Array2<usize>,
    /// Cells dropped because the market price was zero.
    pub zero_price_cells: usize,
    pub max_arpe: f64,
    /// Standard deviation at the cell holding `max_arpe`.
    pub std_at_max_arpe: f64,
    pub max_mrpe: f64,
}

/// Volatility used to reprice a cell of `grid` with Black–Scholes.
///
/// Implied vols are used as they are. Local vols go through `σ̂ = sqrt(ω/T)` with the
/// local total variance `ω = σ_loc²·T`, which returns `σ_loc` itself.
fn repricing_vol(grid: &SurfaceGrid, i: usize, j: usize) -> Result<f64> {
    let v = grid.values[[i, j]];
    let t = grid.maturities[j];
    match grid.kind {
        SurfaceKind::ImpliedVol => Ok(v),
        SurfaceKind::LocalVol => {
            let omega = v * v * t;
            Ok((omega / t).sqrt())
        }
        SurfaceKind::TotalVariance => Ok((v / t).sqrt()),
        SurfaceKind::Price => Err(Error::InvalidInput("cannot reprice from a price grid".into())),
    }
}

/// Reprices every valid cell of each volatility grid and compares with the market price grid.
///
/// All grids must share axes; `rates[s]` is the rate of set `s` and `s0` the common spot.
pub fn reprice_stats(vols: &[SurfaceGrid], markets: &[SurfaceGrid], rates: &[f64], s0: f64) -> Result<RepriceStats> {
    if vols.is_empty() || vols.len() != markets.len() || vols.len() != rates.len() {
        return Err(Error::Shape(format!(
            "{} volatility grids, {} price grids, {} rates",
            vols.len(),
            markets.len(),
            rates.len()
        )));
    }
    let (strikes, maturities) = (vols[0].strikes.clone(), vols[0].maturities.clone());
    for (v, m) in vols.iter().zip(markets) {
        if v.strikes != strikes || v.maturities != maturities || m.strikes != strikes || m.maturities != maturities {
            return Err(Error::Shape("repricing grids do not share axes".into()));
        }
        if m.kind != SurfaceKind::Price {
            return Err(Error::InvalidInput(format!("market grid must hold prices, got {}", m.kind)));
        }
    }
    let dim = (strikes.len(), maturities.len());
    let mut sum = Array2::<f64>::zeros(dim);
    let mut sum_sq = Array2::<f64>::zeros(dim);
    let mut mrpe = Array2::<f64>::from_elem(dim, f64::NAN);
    let mut samples = Array2::<usize>::zeros(dim);
    let mut zero_price_cells = 0;
    for ((v, m), &rate) in vols.iter().zip(markets).zip(rates) {
        for i in 0..dim.0 {
            for j in 0..dim.1 {
                if !v.is_valid(i, j) || !m.is_valid(i, j) {
                    continue;
                }
                let market = m.values[[i, j]];
                if market == 0.0 {
                    zero_price_cells += 1;
                    continue;
                }
                let q = BsQuote {
                    s0,
                    strike: strikes[i],
                    maturity: maturities[j],
                    rate,
                    sigma: repricing_vol(v, i, j)?,
                };
                q.validate()?;
                let rel = (market - bs_call(&q)).abs() / market.abs();
                sum[[i, j]] += rel;
                sum_sq[[i, j]] += rel * rel;
                mrpe[[i, j]] = if samples[[i, j]] == 0 { rel } else { mrpe[[i, j]].max(rel) };
                samples[[i, j]] += 1;
            }
        }
    }
    let mut arpe = Array2::<f64>::from_elem(dim, f64::NAN);
    let mut std = Array2::<f64>::from_elem(dim, f64::NAN);
    let (mut max_arpe, mut std_at_max_arpe, mut max_mrpe) = (f64::NAN, f64::NAN, f64::NAN);
    for i in 0..dim.0 {
        for j in 0..dim.1 {
            let n = samples[[i, j]];
            if n == 0 {
                continue;
            }
            let mean = sum[[i, j]] / n as f64;
            arpe[[i, j]] = mean;
            std[[i, j]] = (sum_sq[[i, j]] / n as f64 - mean * mean).max(0.0).sqrt();
            if max_arpe.is_nan() || mean > max_arpe {
                max_arpe = mean;
                std_at_max_arpe = std[[i, j]];
            }
            if max_mrpe.is_nan() || mrpe[[i, j]] > max_mrpe {
                max_mrpe = mrpe[[i, j]];
            }
        }
    }
    Ok(RepriceStats {
        strikes,
        maturities,
        arpe,
        mrpe,
        std,
        samples,
        zero_price_cells,
        max_arpe,
        std_at_max_arpe,
        max_mrpe,
    })
}

impl RepriceStats {
    /// Heatmap CSV with header `T,K,arpe,mrpe,std`, one row per cell with samples.
    pub fn write_heatmap_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["T", "K", "arpe", "mrpe", "std"]).map_err(csv_err)?;
        for (j, t) in self.maturities.iter().enumerate() {
            for (i, k) in self.strikes.iter().enumerate() {
                if self.samples[[i, j]] == 0 {
                    continue;
                }
                w.write_record([
                    t.to_string(),
                    k.to_string(),
                    self.arpe[[i, j]].to_string(),
                    self.mrpe[[i, j]].to_string(),
                    self.std[[i, j]].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let (mae, mape) = mae_mape(&[0.22, 0.36], &[0.2, 0.4]).unwrap();
        assert!((mae - 0.03).abs() < 1e-15);
        assert!((mape - 0.10).abs() < 1e-15);
        assert_eq!(mae_mape(&[0.2], &[0.2]).unwrap(), (0.0, 0.0));
        assert!(matches!(mae_mape(&[0.2], &[0.0]), Err(Error::Domain(_))));
        assert!(mae_mape(&[], &[]).is_err());
    }

    #[test]
    fn exact_vols_reprice_exactly() {
        let strikes = vec![0.8, 1.0, 1.3];
        let maturities = vec![0.5, 1.0];
        let vol = |k: f64, t: f64| 0.2 + 0.05 * (k - 1.0).powi(2) + 0.01 * t;
        let iv = SurfaceGrid::from_fn(strikes.clone(), maturities.clone(), SurfaceKind::ImpliedVol, vol).unwrap();
        let px = SurfaceGrid::from_fn(strikes, maturities, SurfaceKind::Price, |k, t| {
            bs_call(&BsQuote { s0: 1.0, strike: k, maturity: t, rate: 0.01, sigma: vol(k, t) })
        })
        .unwrap();
        let stats = reprice_stats(&[iv.clone(), iv], &[px.clone(), px], &[0.01, 0.01], 1.0).unwrap();
        assert!(stats.max_arpe.abs() < 1e-10 && stats.max_mrpe.abs() < 1e-10);
        assert!(stats.samples.iter().all(|&n| n == 2));
    }
}
