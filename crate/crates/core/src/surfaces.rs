//! Rectangular (strike × maturity) surfaces and Dupire local volatility by finite differences.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the values of a [`SurfaceGrid`] represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Price,
    ImpliedVol,
    LocalVol,
    TotalVariance,
}

impl SurfaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SurfaceKind::Price => "price",
            SurfaceKind::ImpliedVol => "implied_vol",
            SurfaceKind::LocalVol => "local_vol",
            SurfaceKind::TotalVariance => "total_variance",
        }
    }
}

impl fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SurfaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "price" => Ok(SurfaceKind::Price),
            "implied_vol" => Ok(SurfaceKind::ImpliedVol),
            "local_vol" => Ok(SurfaceKind::LocalVol),
            "total_variance" => Ok(SurfaceKind::TotalVariance),
            other => Err(Error::InvalidInput(format!("unknown surface kind '{other}'"))),
        }
    }
}

/// Status of a single surface cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Valid,
    /// The stencil needed for this cell does not exist (grid edge).
    Absent,
    /// The cell was computed but failed a positivity or convexity check.
    Invalid,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Valid => "valid",
            CellStatus::Absent => "absent",
            CellStatus::Invalid => "invalid",
        }
    }
}

impl FromStr for CellStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" | "1" | "true" => Ok(CellStatus::Valid),
            "absent" => Ok(CellStatus::Absent),
            "invalid" | "0" | "false" => Ok(CellStatus::Invalid),
            other => Err(Error::InvalidInput(format!("unknown cell status '{other}'"))),
        }
    }
}

/// Values on a strike × maturity grid. Row `i` is strike `i`, column `j` maturity `j`.
///
/// Non-valid cells hold `0.0` so the value matrix stays finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub maturities: Vec<f64>,
    pub strikes: Vec<f64>,
    pub values: Array2<f64>,
    pub status: Array2<CellStatus>,
    pub kind: SurfaceKind,
}

fn strictly_ascending(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite()) && xs.windows(2).all(|w| w[0] < w[1])
}

impl SurfaceGrid {
    /// Builds a grid with every cell valid.
    pub fn new(strikes: Vec<f64>, maturities: Vec<f64>, values: Array2<f64>, kind: SurfaceKind) -> Result<Self> {
        let status = Array2::from_elem(values.raw_dim(), CellStatus::Valid);
        Self::with_status(strikes, maturities, values, status, kind)
    }

    pub fn with_status(
        strikes: Vec<f64>,
        maturities: Vec<f64>,
        values: Array2<f64>,
        status: Array2<CellStatus>,
        kind: SurfaceKind,
    ) -> Result<Self> {
        let grid = Self { maturities, strikes, values, status, kind };
        grid.validate()?;
        Ok(grid)
    }

    /// Evaluates `f(strike, maturity)` at every node.
    pub fn from_fn<F: FnMut(f64, f64) -> f64>(
        strikes: Vec<f64>,
        maturities: Vec<f64>,
        kind: SurfaceKind,
        mut f: F,
    ) -> Result<Self> {
        let values = Array2::from_shape_fn((strikes.len(), maturities.len()), |(i, j)| f(strikes[i], maturities[j]));
        Self::new(strikes, maturities, values, kind)
    }

    pub fn validate(&self) -> Result<()> {
        if !strictly_ascending(&self.strikes) || !strictly_ascending(&self.maturities) {
            return Err(Error::InvalidInput("surface axes must be finite and strictly ascending".into()));
        }
        let shape = (self.strikes.len(), self.maturities.len());
        if self.values.dim() != shape || self.status.dim() != shape {
            return Err(Error::Shape(format!(
                "values {:?} / status {:?} do not match axes {shape:?}",
                self.values.dim(),
                self.status.dim()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("surface value {v}")));
        }
        if self.kind != SurfaceKind::Price
            && self
                .values
                .iter()
                .zip(self.status.iter())
                .any(|(v, s)| *s == CellStatus::Valid && *v < 0.0)
        {
            return Err(Error::InvalidInput(format!("negative value in {} surface", self.kind)));
        }
        Ok(())
    }

    pub fn n_strikes(&self) -> usize {
        self.strikes.len()
    }

    pub fn n_maturities(&self) -> usize {
        self.maturities.len()
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.status[[i, j]] == CellStatus::Valid
    }

    pub fn count(&self, status: CellStatus) -> usize {
        self.status.iter().filter(|s| **s == status).count()
    }

    /// Writes the surface as CSV with header `kind,T,K,value,valid`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["kind", "T", "K", "value", "valid"]).map_err(csv_err)?;
        for (j, t) in self.maturities.iter().enumerate() {
            for (i, k) in self.strikes.iter().enumerate() {
                w.write_record([
                    self.kind.as_str(),
                    &t.to_string(),
                    &k.to_string(),
                    &self.values[[i, j]].to_string(),
                    self.status[[i, j]].as_str(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a surface CSV; axes are recovered by sorting the distinct coordinates.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["kind", "T", "K", "value", "valid"] {
            return Err(Error::Parse { line: 1, msg: format!("unexpected header {headers:?}") });
        }
        let mut cells = Vec::new();
        let mut kind: Option<SurfaceKind> = None;
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx + 2;
            let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            let parse = |col: usize| -> Result<f64> {
                rec[col]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse { line, msg: format!("column {col}: {e}") })
            };
            let row_kind: SurfaceKind =
                rec[0].trim().parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?;
            match kind {
                None => kind = Some(row_kind),
                Some(k) if k != row_kind => {
                    return Err(Error::Parse { line, msg: "mixed surface kinds".into() });
                }
                _ => {}
            }
            let status: CellStatus =
                rec[4].trim().parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?;
            cells.push((parse(1)?, parse(2)?, parse(3)?, status));
        }
        let kind = kind.ok_or_else(|| Error::Parse { line: 1, msg: "surface CSV has no rows".into() })?;
        let mut maturities: Vec<f64> = cells.iter().map(|c| c.0).collect();
        let mut strikes: Vec<f64> = cells.iter().map(|c| c.1).collect();
        for axis in [&mut maturities, &mut strikes] {
            axis.sort_by(f64::total_cmp);
            axis.dedup();
        }
        let shape = (strikes.len(), maturities.len());
        if cells.len() != shape.0 * shape.1 {
            return Err(Error::Shape(format!("{} rows do not form a {shape:?} grid", cells.len())));
        }
        let mut values = Array2::zeros(shape);
        let mut status = Array2::from_elem(shape, CellStatus::Absent);
        let mut seen = Array2::from_elem(shape, false);
        for (t, k, v, s) in cells {
            let j = maturities.binary_search_by(|x| x.total_cmp(&t)).expect("axis built from cells");
            let i = strikes.binary_search_by(|x| x.total_cmp(&k)).expect("axis built from cells");
            if seen[[i, j]] {
                return Err(Error::Shape(format!("duplicate cell at T={t}, K={k}")));
            }
            seen[[i, j]] = true;
            values[[i, j]] = v;
            status[[i, j]] = s;
        }
        Self::with_status(strikes, maturities, values, status, kind)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line: 0, msg: format!("{other:?}") },
    }
}

/// Share of computed cells a Dupire extraction may flag invalid before it fails.
const MAX_INVALID_FRACTION: f64 = 0.5;

/// Dupire local volatility from a call-price grid by finite differences.
///
/// Uses backward differences in maturity and strike and a three-point second
/// difference in strike (adjacent-spacing weights, so non-uniform grids work):
///
/// `σ² = (∂_T V + r K ∂_K V) / (½ K² ∂_KK V)`.
///
/// The first maturity column and the first and last strike rows lack the
/// neighbours these stencils need and come back [`CellStatus::Absent`]. Cells with
/// `∂_KK V <= 0` or a negative numerator are flagged [`CellStatus::Invalid`].
pub fn dupire_fdm(prices: &SurfaceGrid, rate: f64) -> Result<SurfaceGrid> {
    if prices.kind != SurfaceKind::Price {
        return Err(Error::InvalidInput(format!("dupire_fdm needs a price grid, got {}", prices.kind)));
    }
    let (ni, nj) = (prices.n_strikes(), prices.n_maturities());
    if ni < 3 || nj < 2 {
        return Err(Error::Shape(format!("dupire_fdm needs >= 3 strikes and >= 2 maturities, got {ni}x{nj}")));
    }
    let v = &prices.values;
    let ks = &prices.strikes;
    let ts = &prices.maturities;
    let mut out = Array2::zeros((ni, nj));
    let mut status = Array2::from_elem((ni, nj), CellStatus::Absent);
    let (mut computed, mut invalid) = (0usize, 0usize);

    for j in 1..nj {
        let dt = ts[j] - ts[j - 1];
        for i in 1..ni - 1 {
            let stencil_ok = [(i, j), (i, j - 1), (i - 1, j), (i + 1, j)]
                .iter()
                .all(|&(a, b)| prices.is_valid(a, b));
            if !stencil_ok {
                continue;
            }
            computed += 1;
            let (k, h_lo, h_hi) = (ks[i], ks[i] - ks[i - 1], ks[i + 1] - ks[i]);
            let dv_dt = (v[[i, j]] - v[[i, j - 1]]) / dt;
            let dv_dk = (v[[i, j]] - v[[i - 1, j]]) / h_lo;
            let d2v_dk2 = 2.0 * (h_lo * v[[i + 1, j]] - (h_lo + h_hi) * v[[i, j]] + h_hi * v[[i - 1, j]])
                / (h_lo * h_hi * (h_lo + h_hi));
            let numerator = dv_dt + rate * k * dv_dk;
            let denominator = 0.5 * k * k * d2v_dk2;
            let var = numerator / denominator;
            if d2v_dk2 > 0.0 && numerator >= 0.0 && var.is_finite() {
                out[[i, j]] = var.sqrt();
                status[[i, j]] = CellStatus::Valid;
            } else {
                invalid += 1;
                status[[i, j]] = CellStatus::Invalid;
            }
        }
    }
    if computed == 0 {
        return Err(Error::Domain("no cell of the price grid has a complete stencil".into()));
    }
    if invalid as f64 > MAX_INVALID_FRACTION * computed as f64 {
        return Err(Error::Domain(format!(
            "Dupire extraction flagged {invalid} of {computed} cells invalid"
        )));
    }
    SurfaceGrid::with_status(ks.clone(), ts.clone(), out, status, SurfaceKind::LocalVol)
}

/// Total variance `ω = σ²·T` of an implied-volatility grid.
pub fn to_total_variance(iv: &SurfaceGrid) -> Result<SurfaceGrid> {
    if iv.kind != SurfaceKind::ImpliedVol {
        return Err(Error::InvalidInput(format!("expected implied_vol surface, got {}", iv.kind)));
    }
    let mut values = iv.values.clone();
    for ((_, j), w) in values.indexed_iter_mut() {
        *w = *w * *w * iv.maturities[j];
    }
    SurfaceGrid::with_status(
        iv.strikes.clone(),
        iv.maturities.clone(),
        values,
        iv.status.clone(),
        SurfaceKind::TotalVariance,
    )
}

/// Inverse of [`to_total_variance`]: `σ = sqrt(ω / T)`.
pub fn from_total_variance(w: &SurfaceGrid) -> Result<SurfaceGrid> {
    if w.kind != SurfaceKind::TotalVariance {
        return Err(Error::InvalidInput(format!("expected total_variance surface, got {}", w.kind)));
    }
    let mut values = w.values.clone();
    for ((_, j), v) in values.indexed_iter_mut() {
        *v = (*v / w.maturities[j]).sqrt();
    }
    SurfaceGrid::with_status(w.strikes.clone(), w.maturities.clone(), values, w.status.clone(), SurfaceKind::ImpliedVol)
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackscholes::{bs_call, BsQuote};

    fn bs_grid(sigma: f64, rate: f64, strikes: Vec<f64>, maturities: Vec<f64>) -> SurfaceGrid {
        SurfaceGrid::from_fn(strikes, maturities, SurfaceKind::Price, |k, t| {
            bs_call(&BsQuote { s0: 1.0, strike: k, maturity: t, rate, sigma })
        })
        .unwrap()
    }

    #[test]
    fn total_variance_of_flat_vol() {
        let iv = SurfaceGrid::from_fn(vec![0.9, 1.0, 1.1], vec![0.5, 1.0], SurfaceKind::ImpliedVol, |_, _| 0.2).unwrap();
        let w = to_total_variance(&iv).unwrap();
        assert!((w.values[[1, 1]] - 0.04).abs() < 1e-17);
        assert!((w.values[[0, 0]] - 0.02).abs() < 1e-17);
    }

    #[test]
    fn zero_vol_gives_zero_variance() {
        let iv = SurfaceGrid::from_fn(vec![1.0], vec![1.0], SurfaceKind::ImpliedVol, |_, _| 0.0).unwrap();
        assert_eq!(to_total_variance(&iv).unwrap().values[[0, 0]], 0.0);
    }

    #[test]
    fn rejects_descending_axes() {
        let r = SurfaceGrid::from_fn(vec![1.0, 0.9], vec![1.0], SurfaceKind::Price, |_, _| 0.1);
        assert!(r.is_err());
    }

    #[test]
    fn dupire_marks_edges_absent() {
        let grid = bs_grid(0.3, 0.0, linspace(0.5, 2.5, 10), linspace(0.5, 2.0, 5));
        let lv = dupire_fdm(&grid, 0.0).unwrap();
        for j in 0..5 {
            assert_eq!(lv.status[[0, j]], CellStatus::Absent);
            assert_eq!(lv.status[[9, j]], CellStatus::Absent);
        }
        for i in 0..10 {
            assert_eq!(lv.status[[i, 0]], CellStatus::Absent);
        }
        assert_eq!(lv.strikes, grid.strikes);
        assert_eq!(lv.maturities, grid.maturities);
    }

    #[test]
    fn dupire_flags_forced_concavity() {
        let mut grid = bs_grid(0.3, 0.0, linspace(0.5, 2.5, 9), linspace(0.5, 2.0, 4));
        // A bump in the last maturity column breaks convexity at that node only;
        // no later column reads it through a maturity difference.
        grid.values[[4, 3]] += 0.05;
        let lv = dupire_fdm(&grid, 0.0).unwrap();
        let invalid: Vec<(usize, usize)> = lv
            .status
            .indexed_iter()
            .filter(|(_, s)| **s == CellStatus::Invalid)
            .map(|(ij, _)| ij)
            .collect();
        assert_eq!(invalid, vec![(4, 3)]);
    }

    #[test]
    fn time_constant_prices_give_zero_local_vol() {
        let strikes = linspace(0.5, 2.0, 8);
        let values = Array2::from_shape_fn((8, 3), |(i, _)| (1.0 - strikes[i]).max(0.0) + 0.05 * (-strikes[i]).exp());
        let grid = SurfaceGrid::new(strikes, vec![0.5, 1.0, 1.5], values, SurfaceKind::Price).unwrap();
        let lv = dupire_fdm(&grid, 0.0).unwrap();
        for (v, s) in lv.values.iter().zip(lv.status.iter()) {
            if *s == CellStatus::Valid {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(lv.count(CellStatus::Valid) > 0);
    }

    #[test]
    fn mostly_invalid_grid_is_rejected() {
        let values = Array2::from_shape_fn((5, 3), |(i, _)| -((i as f64) * (i as f64)));
        let grid = SurfaceGrid::new(linspace(0.5, 1.5, 5), vec![0.5, 1.0, 1.5], values, SurfaceKind::Price).unwrap();
        assert!(dupire_fdm(&grid, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let grid = bs_grid(0.25, 0.01, vec![0.8, 1.0, 1.3], vec![0.5, 1.5]);
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("kind,T,K,value,valid\n"));
        assert_eq!(text.lines().count(), 7);
        let back = SurfaceGrid::read_csv(&buf[..]).unwrap();
        assert_eq!(back, grid);
    }
}
