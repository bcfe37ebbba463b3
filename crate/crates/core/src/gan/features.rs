use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which volatility the generator learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Implied,
    Local,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Implied => "implied",
            Task::Local => "local",
        }
    }

    /// Column positions of the generator features for this task.
    pub fn layout(self) -> FeatureLayout {
        match self {
            Task::Implied => FeatureLayout { k: 0, sigma_atm: 1, sigma_implied: None, t: 2, r: 3, k_log: 4, dim: 5 },
            Task::Local => FeatureLayout { k: 0, sigma_atm: 1, sigma_implied: Some(2), t: 3, r: 4, k_log: 5, dim: 6 },
        }
    }

    /// Task whose feature width equals `dim`.
    pub fn from_feature_dim(dim: usize) -> Result<Self> {
        match dim {
            5 => Ok(Task::Implied),
            6 => Ok(Task::Local),
            _ => Err(Error::Config(format!("no task takes {dim} features"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implied" => Ok(Task::Implied),
            "local" => Ok(Task::Local),
            other => Err(Error::Config(format!("unknown task '{other}' (expected implied or local)"))),
        }
    }
}

/// Column indices inside a feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub k: usize,
    pub sigma_atm: usize,
    pub sigma_implied: Option<usize>,
    pub t: usize,
    pub r: usize,
    pub k_log: usize,
    pub dim: usize,
}

/// One training record. `k` is the moneyness `K/s0`; `k_log = ln(k) − rT`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub param_set: usize,
    pub k: f64,
    pub sigma_atm: f64,
    pub t: f64,
    pub r: f64,
    pub k_log: f64,
    pub sigma_implied: Option<f64>,
    pub target: f64,
}

impl FeatureRow {
    pub fn new(
        param_set: usize,
        k: f64,
        sigma_atm: f64,
        t: f64,
        r: f64,
        sigma_implied: Option<f64>,
        target: f64,
    ) -> Result<Self> {
        let row = Self { param_set, k, sigma_atm, t, r, k_log: adjusted_log_moneyness(k, r, t), sigma_implied, target };
        row.validate()?;
        Ok(row)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.k, self.sigma_atm, self.t, self.r, self.k_log, self.target]
            .iter()
            .chain(self.sigma_implied.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!("feature row {self:?}")));
        }
        if !(self.k > 0.0 && self.sigma_atm > 0.0 && self.t > 0.0) {
            return Err(Error::InvalidInput(format!(
                "feature row needs k, sigma_atm, T > 0 (k={}, sigma_atm={}, T={})",
                self.k, self.sigma_atm, self.t
            )));
        }
        if self.k_log != adjusted_log_moneyness(self.k, self.r, self.t) {
            return Err(Error::InvalidInput(format!("k_log {} is not ln(k) - rT", self.k_log)));
        }
        Ok(())
    }

    /// Writes this row's generator features into `out` following `layout`.
    pub fn write_features(&self, layout: &FeatureLayout, out: &mut [f64]) -> Result<()> {
        out[layout.k] = self.k;
        out[layout.sigma_atm] = self.sigma_atm;
        out[layout.t] = self.t;
        out[layout.r] = self.r;
        out[layout.k_log] = self.k_log;
        if let Some(col) = layout.sigma_implied {
            out[col] = self
                .sigma_implied
                .ok_or_else(|| Error::Config("local-volatility rows need sigma_implied".into()))?;
        }
        Ok(())
    }
}

pub fn adjusted_log_moneyness(k: f64, r: f64, t: f64) -> f64 {
    k.ln() - r * t
}

/// A task-tagged collection of feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: Task,
    pub rows: Vec<FeatureRow>,
}

impl Dataset {
    pub fn new(task: Task, rows: Vec<FeatureRow>) -> Result<Self> {
        let ds = Self { task, rows };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for row in &self.rows {
            row.validate()?;
            if (self.task == Task::Local) != row.sigma_implied.is_some() {
                return Err(Error::InvalidInput(format!(
                    "{} dataset row for param set {} has sigma_implied = {:?}",
                    self.task, row.param_set, row.sigma_implied
                )));
            }
        }
        Ok(())
    }

    /// `N × dim` generator inputs.
    pub fn features(&self) -> Result<Array2<f64>> {
        let layout = self.task.layout();
        let mut x = Array2::zeros((self.rows.len(), layout.dim));
        for (row, mut out) in self.rows.iter().zip(x.rows_mut()) {
            row.write_features(&layout, out.as_slice_mut().expect("standard layout"))?;
        }
        Ok(x)
    }

    pub fn targets(&self) -> Array1<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    /// Seeded row-wise split; the first part holds `1 − holdout` of the rows.
    pub fn split(&self, holdout: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&holdout) {
            return Err(Error::Config(format!("holdout fraction {holdout} outside [0, 1)")));
        }
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_hold = (self.rows.len() as f64 * holdout).round() as usize;
        let (hold, keep) = idx.split_at(n_hold);
        let pick = |ix: &[usize]| {
            let mut ix = ix.to_vec();
            ix.sort_unstable();
            Dataset { task: self.task, rows: ix.iter().map(|&i| self.rows[i]).collect() }
        };
        Ok((pick(keep), pick(hold)))
    }
}

/// Per-column sample mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standard-deviation floor for constant features.
pub const NOISE_STD_FLOOR: f64 = 1e-6;

impl FeatureStats {
    pub fn fit(x: &Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("feature statistics of an empty matrix".into()));
        }
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.columns().into_iter().map(|c| c.sum() / n).collect();
        let std = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Ok(Self { mean, std })
    }
}

/// Shifted and scaled Gaussian noise: column `j` is drawn from `N(mean_j, std_j)`.
pub fn make_noise_batch(stats: &FeatureStats, rows: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    if stats.mean.len() != stats.std.len() || stats.mean.is_empty() {
        return Err(Error::Shape("feature statistics have inconsistent lengths".into()));
    }
    let dists = stats
        .mean
        .iter()
        .zip(&stats.std)
        .map(|(&m, &s)| {
            let s = if s > 0.0 { s } else { NOISE_STD_FLOOR };
            Normal::new(m, s).map_err(|e| Error::InvalidInput(format!("noise distribution: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut z = Array2::zeros((rows, dists.len()));
    for mut row in z.rows_mut() {
        for (v, d) in row.iter_mut().zip(&dists) {
            *v = d.sample(rng);
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_log_identity_and_layout() {
        let row = FeatureRow::new(0, 1.3, 0.25, 0.7, 0.03, Some(0.27), 0.3).unwrap();
        assert_eq!(row.k_log, 1.3f64.ln() - 0.03 * 0.7);
        let mut out = [0.0; 6];
        row.write_features(&Task::Local.layout(), &mut out).unwrap();
        assert_eq!(out, [1.3, 0.25, 0.27, 0.7, 0.03, row.k_log]);
        let mut bad = row;
        bad.k_log += 1e-9;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn task_consistency_is_checked() {
        let row = FeatureRow::new(0, 1.0, 0.2, 1.0, 0.0, None, 0.2).unwrap();
        assert!(Dataset::new(Task::Local, vec![row]).is_err());
        assert!(Dataset::new(Task::Implied, vec![row]).is_ok());
    }

    #[test]
    fn standard_noise_moments() {
        let stats = FeatureStats { mean: vec![0.0], std: vec![1.0] };
        let n = 100_000;
        let z = make_noise_batch(&stats, n, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let m = z.sum() / n as f64;
        let s = (z.mapv(|v| (v - m).powi(2)).sum() / n as f64).sqrt();
        let bound = 3.0 / (n as f64).sqrt();
        assert!(m.abs() < bound, "mean {m}");
        assert!((s - 1.0).abs() < bound, "std {s}");
    }

    #[test]
    fn constant_feature_gives_near_constant_noise() {
        let stats = FeatureStats { mean: vec![0.02], std: vec![0.0] };
        let z = make_noise_batch(&stats, 1000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(z.iter().all(|v| (v - 0.02).abs() < 1e-5));
    }

    #[test]
    fn split_partitions_rows() {
        let rows: Vec<_> =
            (0..40).map(|i| FeatureRow::new(i, 1.0 + i as f64 / 100.0, 0.2, 1.0, 0.0, None, 0.2).unwrap()).collect();
        let ds = Dataset::new(Task::Implied, rows).unwrap();
        let (a, b) = ds.split(0.15, 3).unwrap();
        assert_eq!((a.len(), b.len()), (34, 6));
        let mut ids: Vec<_> = a.rows.iter().chain(&b.rows).map(|r| r.param_set).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..40).collect::<Vec<_>>());
        assert_eq!(ds.split(0.15, 3).unwrap(), (a, b));
    }
}
