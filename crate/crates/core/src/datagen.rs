//! Synthetic Heston market data: parameter sampling, price/implied/local grids
//! and feature-row assembly, plus the dataset CSV format.

use std::fmt::Write as _;
use std::io::{Read, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackscholes::{implied_vol_brent, ImpliedVolOptions};
use crate::error::{Error, Result};
use crate::gan::{AtmCurve, Dataset, FeatureRow, SurfaceContext, Task};
use crate::heston::{cos_call_price, cos_call_prices, CosConfig, HestonParams};
use crate::kv::{join_list, KvMap};
use crate::surfaces::{csv_err, dupire_fdm, linspace, CellStatus, SurfaceGrid, SurfaceKind};

/// Closed interval a parameter is drawn from uniformly; `lo == hi` fixes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::Config(format!("{name} range [{}, {}] is invalid", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// How the strike and maturity axes of each set are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    /// Independent uniform draws, sorted.
    UniformSorted,
    /// Evenly spaced including both ends.
    Linspace,
}

impl std::str::FromStr for Spacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_sorted" => Ok(Spacing::UniformSorted),
            "linspace" => Ok(Spacing::Linspace),
            other => Err(Error::Config(format!("unknown spacing '{other}'"))),
        }
    }
}

impl Spacing {
    fn as_str(self) -> &'static str {
        match self {
            Spacing::UniformSorted => "uniform_sorted",
            Spacing::Linspace => "linspace",
        }
    }
}

/// Parameter domain and grid sizes of a synthetic data set. Spot is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub r: ParamRange,
    pub kappa: ParamRange,
    pub rho: ParamRange,
    pub gamma: ParamRange,
    pub v_bar: ParamRange,
    pub v0: ParamRange,
    /// Moneyness `K/s0`.
    pub moneyness: ParamRange,
    pub maturity: ParamRange,
    pub n_param_sets: usize,
    pub n_maturities: usize,
    pub n_strikes: usize,
    pub spacing: Spacing,
    pub seed: u64,
}

impl SamplingSpec {
    /// Training domain: 10 random sets on 75 maturities × 50 strikes.
    pub fn training() -> Self {
        Self {
            r: ParamRange::new(0.0, 0.05),
            kappa: ParamRange::new(0.0, 3.0),
            rho: ParamRange::new(-0.9, 0.0),
            gamma: ParamRange::new(0.01, 0.5),
            v_bar: ParamRange::new(0.01, 0.5),
            v0: ParamRange::new(0.05, 0.5),
            moneyness: ParamRange::new(0.5, 2.5),
            maturity: ParamRange::new(0.5, 2.0),
            n_param_sets: 10,
            n_maturities: 75,
            n_strikes: 50,
            spacing: Spacing::UniformSorted,
            seed: 0,
        }
    }

    /// Out-of-training test surface: one fixed set on 11 maturities × 157 strikes.
    pub fn out_of_training() -> Self {
        let p = HestonParams::out_of_training();
        Self {
            r: ParamRange::fixed(p.r),
            kappa: ParamRange::fixed(p.kappa),
            rho: ParamRange::fixed(p.rho),
            gamma: ParamRange::fixed(p.gamma),
            v_bar: ParamRange::fixed(p.v_bar),
            v0: ParamRange::fixed(p.v0),
            moneyness: ParamRange::new(0.3, 2.8),
            maturity: ParamRange::new(0.3, 2.0),
            n_param_sets: 1,
            n_maturities: 11,
            n_strikes: 157,
            spacing: Spacing::Linspace,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in self.ranges() {
            r.validate(name)?;
        }
        if self.n_param_sets == 0 || self.n_maturities == 0 || self.n_strikes == 0 {
            return Err(Error::Config("set, maturity and strike counts must be at least 1".into()));
        }
        if self.moneyness.lo <= 0.0 || self.maturity.lo <= 0.0 {
            return Err(Error::Config("moneyness and maturity must be positive".into()));
        }
        Ok(())
    }

    fn ranges(&self) -> [(&'static str, ParamRange); 8] {
        [
            ("r", self.r),
            ("kappa", self.kappa),
            ("rho", self.rho),
            ("gamma", self.gamma),
            ("v_bar", self.v_bar),
            ("v0", self.v0),
            ("moneyness", self.moneyness),
            ("maturity", self.maturity),
        ]
    }

    /// Parses `key = value` text on top of [`Self::training`]. Ranges are written
    /// `lo, hi` or a single fixed value.
    pub fn from_kv(text: &str) -> Result<Self> {
        let m = KvMap::parse(text)?;
        m.check_known(&[
            "r",
            "kappa",
            "rho",
            "gamma",
            "v_bar",
            "v0",
            "moneyness",
            "maturity",
            "n_param_sets",
            "n_maturities",
            "n_strikes",
            "spacing",
            "seed",
        ])?;
        let mut spec = Self::training();
        let range = |key: &str, default: ParamRange| -> Result<ParamRange> {
            if !m.contains(key) {
                return Ok(default);
            }
            match m.list::<f64>(key)?.as_slice() {
                [v] => Ok(ParamRange::fixed(*v)),
                [lo, hi] => Ok(ParamRange::new(*lo, *hi)),
                _ => Err(Error::Parse { line: 0, msg: format!("{key}: expected one value or 'lo, hi'") }),
            }
        };
        spec.r = range("r", spec.r)?;
        spec.kappa = range("kappa", spec.kappa)?;
        spec.rho = range("rho", spec.rho)?;
        spec.gamma = range("gamma", spec.gamma)?;
        spec.v_bar = range("v_bar", spec.v_bar)?;
        spec.v0 = range("v0", spec.v0)?;
        spec.moneyness = range("moneyness", spec.moneyness)?;
        spec.maturity = range("maturity", spec.maturity)?;
        spec.n_param_sets = m.get_or("n_param_sets", spec.n_param_sets)?;
        spec.n_maturities = m.get_or("n_maturities", spec.n_maturities)?;
        spec.n_strikes = m.get_or("n_strikes", spec.n_strikes)?;
        spec.spacing = m.get_or("spacing", spec.spacing)?;
        spec.seed = m.get_or("seed", spec.seed)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (name, r) in self.ranges() {
            let _ = writeln!(s, "{name} = {}", join_list(&[r.lo, r.hi]));
        }
        let _ = writeln!(s, "n_param_sets = {}", self.n_param_sets);
        let _ = writeln!(s, "n_maturities = {}", self.n_maturities);
        let _ = writeln!(s, "n_strikes = {}", self.n_strikes);
        let _ = writeln!(s, "spacing = {}", self.spacing.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// Independent generator for the axes of set `index`.
    fn set_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64 + 1);
        rng
    }

    fn axis(&self, range: ParamRange, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let mut xs = match self.spacing {
            Spacing::Linspace => linspace(range.lo, range.hi, n),
            Spacing::UniformSorted => (0..n).map(|_| range.sample(rng)).collect(),
        };
        xs.sort_by(f64::total_cmp);
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("grid axis on [{}, {}] has repeated nodes", range.lo, range.hi)));
        }
        Ok(xs)
    }
}

/// Draws `n_param_sets` parameter sets (in the order r, κ, ρ, γ, v̄, v0) with unit spot.
pub fn sample_params(spec: &SamplingSpec) -> Result<Vec<HestonParams>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n_param_sets)
        .map(|_| {
            let r = spec.r.sample(&mut rng);
            let kappa = spec.kappa.sample(&mut rng);
            let rho = spec.rho.sample(&mut rng);
            let gamma = spec.gamma.sample(&mut rng);
            let v_bar = spec.v_bar.sample(&mut rng);
            let v0 = spec.v0.sample(&mut rng);
            HestonParams::new(kappa, rho, gamma, v_bar, v0, r, 1.0)
        })
        .collect()
}

/// Largest share of cells that may fail implied-vol inversion before a grid is rejected.
pub const MAX_DROP_FRACTION: f64 = 0.10;

/// All grids of one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSurfaces {
    pub index: usize,
    pub params: HestonParams,
    pub prices: SurfaceGrid,
    /// Cells where inversion failed are marked invalid.
    pub implied: SurfaceGrid,
    pub local: Option<SurfaceGrid>,
    pub atm: AtmCurve,
    pub dropped_cells: usize,
}

impl SetSurfaces {
    /// Generator context for this set's own axes.
    pub fn context(&self, task: Task) -> SurfaceContext {
        SurfaceContext {
            rate: self.params.r,
            atm: self.atm.clone(),
            sigma_implied: (task == Task::Local).then(|| self.implied.clone()),
        }
    }
}

/// Prices, inverts and (optionally) extracts Dupire local vol on the given axes.
pub fn price_surfaces(
    index: usize,
    params: &HestonParams,
    strikes: &[f64],
    maturities: &[f64],
    with_local: bool,
) -> Result<SetSurfaces> {
    let cfg = CosConfig::default();
    let opts = ImpliedVolOptions::default();
    let (ni, nj) = (strikes.len(), maturities.len());
    let mut prices = Array2::zeros((ni, nj));
    for (j, &t) in maturities.iter().enumerate() {
        for (i, v) in cos_call_prices(params, strikes, t, &cfg)?.into_iter().enumerate() {
            prices[[i, j]] = v;
        }
    }
    let mut iv = Array2::zeros((ni, nj));
    let mut status = Array2::from_elem((ni, nj), CellStatus::Valid);
    let mut dropped = 0;
    for j in 0..nj {
        for i in 0..ni {
            match implied_vol_brent(prices[[i, j]], params.s0, strikes[i], maturities[j], params.r, &opts) {
                Ok(s) => iv[[i, j]] = s,
                Err(e) => {
                    log::debug!("set {index}: K={} T={} dropped: {e}", strikes[i], maturities[j]);
                    iv[[i, j]] = f64::NAN;
                    status[[i, j]] = CellStatus::Invalid;
                    dropped += 1;
                }
            }
        }
    }
    if dropped as f64 > MAX_DROP_FRACTION * (ni * nj) as f64 {
        return Err(Error::Convergence(format!("set {index}: {dropped} of {} implied vols failed", ni * nj)));
    }
    let atm_vols = maturities
        .iter()
        .map(|&t| {
            let px = cos_call_price(params, params.s0, t, &cfg)?;
            implied_vol_brent(px, params.s0, params.s0, t, params.r, &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let prices = SurfaceGrid::new(strikes.to_vec(), maturities.to_vec(), prices, SurfaceKind::Price)?;
    let implied = SurfaceGrid::with_status(strikes.to_vec(), maturities.to_vec(), iv, status, SurfaceKind::ImpliedVol)?;
    let local = if with_local { Some(dupire_fdm(&prices, params.r)?) } else { None };
    Ok(SetSurfaces {
        index,
        params: *params,
        prices,
        implied,
        local,
        atm: AtmCurve::new(maturities.to_vec(), atm_vols)?,
        dropped_cells: dropped,
    })
}

/// Feature rows of one set for `task`, in maturity-major, strike-minor order.
pub fn feature_rows(set: &SetSurfaces, task: Task) -> Result<Vec<FeatureRow>> {
    let g = &set.implied;
    let p = &set.params;
    let mut rows = Vec::with_capacity(g.n_strikes() * g.n_maturities());
    for (j, &t) in g.maturities.iter().enumerate() {
        for (i, &strike) in g.strikes.iter().enumerate() {
            if !g.is_valid(i, j) {
                continue;
            }
            let sigma_implied = g.values[[i, j]];
            let (implied, target) = match task {
                Task::Implied => (None, sigma_implied),
                Task::Local => {
                    let local = set.local.as_ref().ok_or_else(|| Error::Config("local grid missing".into()))?;
                    if !local.is_valid(i, j) {
                        continue;
                    }
                    (Some(sigma_implied), local.values[[i, j]])
                }
            };
            rows.push(FeatureRow::new(set.index, strike / p.s0, set.atm.at(t), t, p.r, implied, target)?);
        }
    }
    Ok(rows)
}

/// A generated data set with the grids it came from.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub dataset: Dataset,
    pub sets: Vec<SetSurfaces>,
    /// Indices of parameter sets whose grids were rejected.
    pub rejected_sets: Vec<usize>,
}

impl GeneratedData {
    pub fn dropped_cells(&self) -> usize {
        self.sets.iter().map(|s| s.dropped_cells).sum()
    }
}

/// Samples parameters, builds every set's grids in parallel and assembles feature rows.
pub fn build_dataset(spec: &SamplingSpec, task: Task) -> Result<GeneratedData> {
    let params = sample_params(spec)?;
    let results: Vec<Result<SetSurfaces>> = params
        .par_iter()
        .enumerate()
        .map(|(index, p)| {
            let mut rng = spec.set_rng(index);
            let maturities = spec.axis(spec.maturity, spec.n_maturities, &mut rng)?;
            let strikes: Vec<f64> =
                spec.axis(spec.moneyness, spec.n_strikes, &mut rng)?.into_iter().map(|k| k * p.s0).collect();
            price_surfaces(index, p, &strikes, &maturities, task == Task::Local)
        })
        .collect();
    let mut sets = Vec::new();
    let mut rejected = Vec::new();
    for (index, res) in results.into_iter().enumerate() {
        match res {
            Ok(s) => sets.push(s),
            Err(e @ (Error::Convergence(_) | Error::Domain(_))) => {
                log::warn!("parameter set {index} rejected: {e}");
                rejected.push(index);
            }
            Err(e) => return Err(e),
        }
    }
    let mut rows = Vec::new();
    for s in &sets {
        rows.extend(feature_rows(s, task)?);
    }
    Ok(GeneratedData { dataset: Dataset::new(task, rows)?, sets, rejected_sets: rejected })
}

/// Repricing harness: random training-domain sets on 8 maturities in [0.5, 2]
/// and the 11 strikes 0.5, 0.7, …, 2.5.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessSpec {
    pub params: SamplingSpec,
    pub maturities: Vec<f64>,
    pub strikes: Vec<f64>,
}

impl HarnessSpec {
    pub fn new(n_sets: usize, seed: u64) -> Self {
        let params = SamplingSpec { n_param_sets: n_sets, seed, ..SamplingSpec::training() };
        Self { params, maturities: linspace(0.5, 2.0, 8), strikes: linspace(0.5, 2.5, 11) }
    }
}

/// Grids of every harness set, including Dupire local vol on the harness axes.
pub fn build_harness(spec: &HarnessSpec) -> Result<Vec<SetSurfaces>> {
    let params = sample_params(&spec.params)?;
    params
        .par_iter()
        .enumerate()
        .map(|(i, p)| price_surfaces(i, p, &spec.strikes, &spec.maturities, true))
        .collect()
}

/// The fixed out-of-training surface on its 11 × 157 grid.
pub fn out_of_training_surfaces(with_local: bool) -> Result<SetSurfaces> {
    let spec = SamplingSpec::out_of_training();
    let p = sample_params(&spec)?[0];
    let maturities = linspace(spec.maturity.lo, spec.maturity.hi, spec.n_maturities);
    let strikes = linspace(spec.moneyness.lo, spec.moneyness.hi, spec.n_strikes);
    price_surfaces(0, &p, &strikes, &maturities, with_local)
}

const DATASET_HEADER: [&str; 9] = ["task", "param_set", "k", "sigma_atm", "T", "r", "k_log", "sigma_implied", "target"];

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the dataset CSV; floats carry 17 significant digits so reading back is exact.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DATASET_HEADER).map_err(csv_err)?;
    for r in &ds.rows {
        w.write_record([
            ds.task.to_string(),
            r.param_set.to_string(),
            fmt17(r.k),
            fmt17(r.sigma_atm),
            fmt17(r.t),
            fmt17(r.r),
            fmt17(r.k_log),
            r.sigma_implied.map(fmt17).unwrap_or_default(),
            fmt17(r.target),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset CSV. An empty file body yields an empty implied-vol dataset.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(Error::Parse { line: 1, msg: format!("unexpected header {:?}", headers) });
    }
    let mut task = None;
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if rec.len() != DATASET_HEADER.len() {
            return Err(Error::Parse { line, msg: format!("expected 9 fields, found {}", rec.len()) });
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|e| Error::Parse { line, msg: format!("{}: {e}", DATASET_HEADER[i]) })
        };
        let row_task: Task = rec[0].parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?;
        if *task.get_or_insert(row_task) != row_task {
            return Err(Error::Parse { line, msg: "rows mix implied and local tasks".into() });
        }
        let row = FeatureRow {
            param_set: rec[1].trim().parse().map_err(|e| Error::Parse { line, msg: format!("param_set: {e}") })?,
            k: num(2)?,
            sigma_atm: num(3)?,
            t: num(4)?,
            r: num(5)?,
            k_log: num(6)?,
            sigma_implied: if rec[7].trim().is_empty() { None } else { Some(num(7)?) },
            target: num(8)?,
        };
        row.validate().map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        rows.push(row);
    }
    Dataset::new(task.unwrap_or(Task::Implied), rows)
}

pub fn export_dataset(ds: &Dataset, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(ds, std::io::BufWriter::new(file))
}

pub fn import_dataset(path: &std::path::Path) -> Result<Dataset> {
    read_dataset(std::io::BufReader::new(std::fs::File::open(path)?))
}
