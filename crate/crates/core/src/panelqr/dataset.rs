use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{DatedSeries, ReturnSeries};

/// Balanced asset x date panel of next-day returns and lagged regressors.
///
/// `dates` are the dates on which the responses are realised; the regressor
/// row for `(asset, date)` is observed on the asset's previous trading date.
/// Storage is asset-major: observation `a * T + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    assets: Vec<String>,
    dates: Vec<NaiveDate>,
    regressors: Vec<String>,
    y: Vec<f64>,
    x: Vec<f64>,
}

impl PanelDataset {
    /// `y[a * T + t]` and `x[(a * T + t) * p + j]`.
    pub fn new(
        assets: Vec<String>,
        dates: Vec<NaiveDate>,
        regressors: Vec<String>,
        y: Vec<f64>,
        x: Vec<f64>,
    ) -> Result<Self> {
        let (n, t, p) = (assets.len(), dates.len(), regressors.len());
        if n == 0 || t == 0 {
            return Err(Error::Data(
                "panel needs at least one asset and one date".into(),
            ));
        }
        if y.len() != n * t || x.len() != n * t * p {
            return Err(Error::Data(format!(
                "panel shape mismatch: {n} assets x {t} dates x {p} regressors vs {} responses, {} regressor cells",
                y.len(),
                x.len()
            )));
        }
        if assets.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::Data("duplicate asset identifiers".into()));
        }
        if regressors.iter().collect::<BTreeSet<_>>().len() != p {
            return Err(Error::Data("duplicate regressor names".into()));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Data(format!(
                "panel dates not strictly increasing at {}",
                w[1]
            )));
        }
        if y.iter().chain(&x).any(|v| !v.is_finite()) {
            return Err(Error::Data(
                "panel contains missing or non-finite cells".into(),
            ));
        }
        Ok(Self {
            assets,
            dates,
            regressors,
            y,
            x,
        })
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn regressors(&self) -> &[String] {
        &self.regressors
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_regressors(&self) -> usize {
        self.regressors.len()
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self, asset: usize, date: usize) -> f64 {
        self.y[asset * self.dates.len() + date]
    }

    pub fn x_row(&self, asset: usize, date: usize) -> &[f64] {
        let p = self.regressors.len();
        let o = asset * self.dates.len() + date;
        &self.x[o * p..(o + 1) * p]
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn regressor_cells(&self) -> &[f64] {
        &self.x
    }

    pub fn asset_index(&self, asset: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == asset)
    }

    /// The sub-panel for the given date positions (in the given order).
    pub fn select_dates(&self, idx: &[usize]) -> Result<Self> {
        let p = self.regressors.len();
        let t = self.dates.len();
        let mut y = Vec::with_capacity(self.assets.len() * idx.len());
        let mut x = Vec::with_capacity(self.assets.len() * idx.len() * p);
        for a in 0..self.assets.len() {
            for &d in idx {
                if d >= t {
                    return Err(Error::InvalidInput(format!("date index {d} out of range")));
                }
                y.push(self.y(a, d));
                x.extend_from_slice(self.x_row(a, d));
            }
        }
        Self::new(
            self.assets.clone(),
            idx.iter().map(|&d| self.dates[d]).collect(),
            self.regressors.clone(),
            y,
            x,
        )
    }

    /// Rows with `keep(date)`.
    pub fn filter_dates(&self, keep: impl Fn(NaiveDate) -> bool) -> Result<Self> {
        let idx: Vec<usize> = (0..self.dates.len())
            .filter(|&d| keep(self.dates[d]))
            .collect();
        self.select_dates(&idx)
    }

    /// Single-asset panel.
    pub fn asset_slice(&self, asset: usize) -> Result<Self> {
        self.select_assets(&[asset])
    }

    pub fn select_assets(&self, assets: &[usize]) -> Result<Self> {
        let t = self.dates.len();
        let p = self.regressors.len();
        let mut y = Vec::new();
        let mut x = Vec::new();
        for &a in assets {
            if a >= self.assets.len() {
                return Err(Error::InvalidInput(format!("asset index {a} out of range")));
            }
            y.extend_from_slice(&self.y[a * t..(a + 1) * t]);
            x.extend_from_slice(&self.x[a * t * p..(a + 1) * t * p]);
        }
        Self::new(
            assets.iter().map(|&a| self.assets[a].clone()).collect(),
            self.dates.clone(),
            self.regressors.clone(),
            y,
            x,
        )
    }

    /// Keeps the named regressor columns, in the given order.
    pub fn select_regressors(&self, names: &[&str]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|n| {
                self.regressors
                    .iter()
                    .position(|r| r == n)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown regressor `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let p = self.regressors.len();
        let x = self
            .x
            .chunks(p.max(1))
            .take(self.y.len())
            .flat_map(|row| cols.iter().map(move |&c| row[c]))
            .collect();
        Self::new(
            self.assets.clone(),
            self.dates.clone(),
            names.iter().map(|s| s.to_string()).collect(),
            self.y.clone(),
            if p == 0 { Vec::new() } else { x },
        )
    }
}

/// One named regressor with per-asset daily values.
#[derive(Debug, Clone, Default)]
pub struct RegressorColumn {
    pub name: String,
    values: BTreeMap<String, BTreeMap<NaiveDate, f64>>,
}

impl RegressorColumn {
    pub fn from_series<S: DatedSeries>(name: impl Into<String>, series: &[S]) -> Self {
        let values = series
            .iter()
            .map(|s| {
                let m = s
                    .dates()
                    .iter()
                    .copied()
                    .zip(s.values().iter().copied())
                    .collect();
                (s.instrument().to_string(), m)
            })
            .collect();
        Self {
            name: name.into(),
            values,
        }
    }
}

/// What to do when assets do not share every date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancePolicy {
    /// Keep only the dates present for every asset.
    #[default]
    Intersect,
    /// Fail and list the missing asset-dates.
    Strict,
}

#[derive(Debug, Clone)]
pub struct PanelBuild {
    pub panel: PanelDataset,
    /// Asset-dates dropped to keep the panel balanced.
    pub dropped: Vec<(String, NaiveDate)>,
}

/// Aligns each asset's return on trading date `t+1` with its regressors on
/// trading date `t`. An asset's trading dates are those where the return and
/// every regressor are observed. Assets are taken in the order of `returns`.
pub fn build_panel(
    returns: &[ReturnSeries],
    regressors: &[RegressorColumn],
    policy: BalancePolicy,
) -> Result<PanelBuild> {
    if returns.is_empty() {
        return Err(Error::Data("no return series supplied".into()));
    }
    let mut per_asset: Vec<BTreeMap<NaiveDate, (f64, Vec<f64>)>> = Vec::new();
    for r in returns {
        let cols = regressors
            .iter()
            .map(|c| {
                c.values.get(&r.instrument).ok_or_else(|| {
                    Error::Data(format!(
                        "regressor `{}` has no series for asset {}",
                        c.name, r.instrument
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let trading: Vec<(NaiveDate, f64)> = r
            .dates
            .iter()
            .zip(&r.returns)
            .filter(|(d, _)| cols.iter().all(|c| c.contains_key(d)))
            .map(|(d, v)| (*d, *v))
            .collect();
        let mut rows = BTreeMap::new();
        for w in trading.windows(2) {
            let (prev, _) = w[0];
            let (date, ret) = w[1];
            let x = cols.iter().map(|c| c[&prev]).collect();
            rows.insert(date, (ret, x));
        }
        per_asset.push(rows);
    }

    let union: BTreeSet<NaiveDate> = per_asset.iter().flat_map(|m| m.keys().copied()).collect();
    let common: Vec<NaiveDate> = union
        .iter()
        .copied()
        .filter(|d| per_asset.iter().all(|m| m.contains_key(d)))
        .collect();
    let mut missing = Vec::new();
    let mut dropped = Vec::new();
    for (r, rows) in returns.iter().zip(&per_asset) {
        for d in &union {
            if !rows.contains_key(d) {
                missing.push((r.instrument.clone(), *d));
            }
        }
        dropped.extend(
            rows.keys()
                .filter(|d| common.binary_search(d).is_err())
                .map(|d| (r.instrument.clone(), *d)),
        );
    }
    if policy == BalancePolicy::Strict && !missing.is_empty() {
        let listed: Vec<String> = missing
            .iter()
            .take(20)
            .map(|(a, d)| format!("{a}@{d}"))
            .collect();
        return Err(Error::Data(format!(
            "unbalanced panel: {} missing asset-dates: {}{}",
            missing.len(),
            listed.join(", "),
            if missing.len() > 20 { ", ..." } else { "" }
        )));
    }
    if common.is_empty() {
        return Err(Error::Data(
            "assets share no common dates; panel would be empty".into(),
        ));
    }

    let mut y = Vec::new();
    let mut x = Vec::new();
    for rows in &per_asset {
        for d in &common {
            let (ret, xs) = &rows[d];
            y.push(*ret);
            x.extend_from_slice(xs);
        }
    }
    let panel = PanelDataset::new(
        returns.iter().map(|r| r.instrument.clone()).collect(),
        common,
        regressors.iter().map(|c| c.name.clone()).collect(),
        y,
        x,
    )?;
    Ok(PanelBuild { panel, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::RealizedVolSeries;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 3, day).unwrap()
    }

    #[test]
    fn regressor_is_lagged_one_trading_day() {
        let r = ReturnSeries::new("CL", vec![d(2), d(3), d(4), d(6)], vec![0.1, 0.2, 0.3, 0.4])
            .unwrap();
        let rv =
            RealizedVolSeries::new("CL", vec![d(2), d(3), d(4), d(6)], vec![1.0, 2.0, 3.0, 4.0])
                .unwrap();
        let b = build_panel(
            &[r],
            &[RegressorColumn::from_series("rv_sqrt", &[rv])],
            BalancePolicy::Strict,
        )
        .unwrap();
        let p = b.panel;
        assert_eq!(p.dates(), &[d(3), d(4), d(6)]);
        assert_eq!(p.y(0, 2), 0.4);
        // the 6th follows the 4th in this asset's calendar
        assert_eq!(p.x_row(0, 2), &[3.0]);
    }

    #[test]
    fn unbalanced_dates_dropped_or_reported() {
        let r1 = ReturnSeries::new("CL", vec![d(2), d(3), d(4)], vec![0.1, 0.2, 0.3]).unwrap();
        let r2 = ReturnSeries::new("GC", vec![d(2), d(4)], vec![0.1, 0.3]).unwrap();
        let rv1 = RealizedVolSeries::new("CL", vec![d(2), d(3), d(4)], vec![1.0; 3]).unwrap();
        let rv2 = RealizedVolSeries::new("GC", vec![d(2), d(4)], vec![1.0; 2]).unwrap();
        let cols = [RegressorColumn::from_series("rv_sqrt", &[rv1, rv2])];
        let returns = [r1, r2];
        let b = build_panel(&returns, &cols, BalancePolicy::Intersect).unwrap();
        assert_eq!(b.panel.dates(), &[d(4)]);
        assert_eq!(b.dropped, vec![("CL".to_string(), d(3))]);
        let err = build_panel(&returns, &cols, BalancePolicy::Strict).unwrap_err();
        assert!(err.to_string().contains("GC@2015-03-03"), "{err}");
    }

    #[test]
    fn missing_regressor_asset_is_an_error() {
        let r = ReturnSeries::new("CL", vec![d(2), d(3)], vec![0.1, 0.2]).unwrap();
        let rv = RealizedVolSeries::new("GC", vec![d(2), d(3)], vec![1.0; 2]).unwrap();
        assert!(build_panel(
            &[r],
            &[RegressorColumn::from_series("rv_sqrt", &[rv])],
            BalancePolicy::Intersect
        )
        .is_err());
    }

    #[test]
    fn select_regressors_reorders_columns() {
        let p = PanelDataset::new(
            vec!["A".into()],
            vec![d(2), d(3)],
            vec!["a".into(), "b".into()],
            vec![0.0, 1.0],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let q = p.select_regressors(&["b"]).unwrap();
        assert_eq!(q.x_row(0, 1), &[4.0]);
        let r = p.select_regressors(&[]).unwrap();
        assert_eq!(r.n_regressors(), 0);
    }
}
