use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::features::{adjusted_log_moneyness, FeatureRow, Task};
use crate::error::{Error, Result};
use crate::surfaces::{SurfaceGrid, SurfaceKind};

/// ATM implied volatility against maturity, interpolated linearly and held flat
/// beyond the end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtmCurve {
    maturities: Vec<f64>,
    vols: Vec<f64>,
}

impl AtmCurve {
    pub fn new(maturities: Vec<f64>, vols: Vec<f64>) -> Result<Self> {
        if maturities.is_empty() || maturities.len() != vols.len() {
            return Err(Error::Shape(format!("{} ATM maturities vs {} vols", maturities.len(), vols.len())));
        }
        if maturities.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("ATM maturities must be strictly increasing".into()));
        }
        if vols.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("ATM vols must be positive and finite".into()));
        }
        Ok(Self { maturities, vols })
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn vols(&self) -> &[f64] {
        &self.vols
    }

    pub fn at(&self, t: f64) -> f64 {
        let m = &self.maturities;
        if t <= m[0] {
            return self.vols[0];
        }
        if t >= m[m.len() - 1] {
            return self.vols[m.len() - 1];
        }
        let j = m.partition_point(|&x| x <= t);
        let w = (t - m[j - 1]) / (m[j] - m[j - 1]);
        self.vols[j - 1] + w * (self.vols[j] - self.vols[j - 1])
    }
}

/// Market inputs needed to evaluate a generator on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceContext {
    pub rate: f64,
    pub atm: AtmCurve,
    /// Implied-vol grid on the requested axes; required by the local-volatility task.
    pub sigma_implied: Option<SurfaceGrid>,
}

/// Evaluates the generator in eval mode on every `(moneyness, maturity)` node.
///
/// Strikes of the returned grid are the moneyness values (unit spot). The grid
/// kind is `implied_vol` or `local_vol` according to `task`.
pub fn generate_surface(
    gen: &crate::nn::MlpNetwork,
    task: Task,
    moneyness: &[f64],
    maturities: &[f64],
    ctx: &SurfaceContext,
) -> Result<SurfaceGrid> {
    let layout = task.layout();
    if gen.input_dim() != layout.dim || gen.output_dim() != 1 {
        return Err(Error::Config(format!("generator shape does not match the {task} task")));
    }
    if task == Task::Local {
        let iv = ctx
            .sigma_implied
            .as_ref()
            .ok_or_else(|| Error::Config("local-volatility surfaces need an implied-vol context grid".into()))?;
        if iv.strikes != moneyness || iv.maturities != maturities {
            return Err(Error::Config("implied-vol context grid axes differ from the requested grid".into()));
        }
    }
    let (ni, nj) = (moneyness.len(), maturities.len());
    let mut x = Array2::zeros((ni * nj, layout.dim));
    for (j, &t) in maturities.iter().enumerate() {
        let atm = ctx.atm.at(t);
        for (i, &k) in moneyness.iter().enumerate() {
            let sigma_implied = ctx.sigma_implied.as_ref().map(|g| g.values[[i, j]]);
            let row = FeatureRow {
                param_set: 0,
                k,
                sigma_atm: atm,
                t,
                r: ctx.rate,
                k_log: adjusted_log_moneyness(k, ctx.rate, t),
                sigma_implied,
                target: 0.0,
            };
            let mut out = x.row_mut(j * ni + i);
            row.write_features(&layout, out.as_slice_mut().expect("row of a standard matrix"))?;
        }
    }
    let pred = gen.predict(&x)?;
    let values = Array2::from_shape_fn((ni, nj), |(i, j)| pred[[j * ni + i, 0]]);
    let kind = match task {
        Task::Implied => SurfaceKind::ImpliedVol,
        Task::Local => SurfaceKind::LocalVol,
    };
    SurfaceGrid::new(moneyness.to_vec(), maturities.to_vec(), values, kind)
}
