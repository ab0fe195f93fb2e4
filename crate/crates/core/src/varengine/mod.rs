//! Value-at-Risk from quantile fits and from the Gaussian benchmark,
//! comparison of the estimated conditional distribution with the standard
//! normal, and unconditional coverage checks.

mod normal;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig10;
use crate::marketdata::{wrap_csv, ReturnSeries};
use crate::panelqr::{QuantileFit, QuantileSpec};

pub use normal::normal_quantile;

/// Standard normal quantiles at a set of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDistribution {
    pub taus: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ReferenceDistribution {
    pub fn new(taus: &[f64]) -> Result<Self> {
        let gamma = taus
            .iter()
            .map(|t| normal_quantile(*t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            taus: taus.to_vec(),
            gamma,
        })
    }
}

/// Which volatility measures drive the quantile model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelTag {
    #[serde(rename = "RV")]
    Rv,
    #[serde(rename = "INDEX")]
    Index,
    #[serde(rename = "RV+INDEX")]
    RvIndex,
    #[serde(rename = "parametric")]
    Parametric,
}

impl ModelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Rv => "RV",
            ModelTag::Index => "INDEX",
            ModelTag::RvIndex => "RV+INDEX",
            ModelTag::Parametric => "parametric",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RV" | "rv" => Ok(ModelTag::Rv),
            "INDEX" | "index" => Ok(ModelTag::Index),
            "RV+INDEX" | "both" | "rv+index" => Ok(ModelTag::RvIndex),
            "parametric" => Ok(ModelTag::Parametric),
            other => Err(Error::InvalidInput(format!("unknown model `{other}`"))),
        }
    }
}

/// Conditional quantile of the return on `date` (the forecast target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaRForecast {
    pub asset: String,
    pub date: NaiveDate,
    pub tau: f64,
    pub model: ModelTag,
    pub value: f64,
}

/// Gaussian VaR `gamma_tau * sigma`.
pub fn parametric_var(tau: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "volatility must be non-negative, got {sigma}"
        )));
    }
    Ok(normal_quantile(QuantileSpec::new(tau)?.tau())? * sigma)
}

/// `alpha_asset(tau) + x_latest' beta(tau)`.
pub fn forecast_var(
    fit: &QuantileFit,
    x_latest: &[f64],
    asset: &str,
    date: NaiveDate,
    model: ModelTag,
) -> Result<VaRForecast> {
    Ok(VaRForecast {
        asset: asset.to_string(),
        date,
        tau: fit.tau,
        model,
        value: fit.predict(asset, x_latest)?,
    })
}

/// Sorts forecasts of each (asset, date, model) by value so they are
/// non-decreasing in tau. Off unless called.
pub fn rearrange_forecasts(forecasts: &mut [VaRForecast]) {
    let mut groups: BTreeMap<(String, NaiveDate, ModelTag), Vec<usize>> = BTreeMap::new();
    for (i, f) in forecasts.iter().enumerate() {
        groups
            .entry((f.asset.clone(), f.date, f.model))
            .or_default()
            .push(i);
    }
    for idx in groups.values() {
        let mut by_tau = idx.clone();
        by_tau.sort_by(|a, b| forecasts[*a].tau.total_cmp(&forecasts[*b].tau));
        let mut values: Vec<f64> = by_tau.iter().map(|i| forecasts[*i].value).collect();
        crate::panelqr::rearrange_quantiles(&mut values);
        for (i, v) in by_tau.into_iter().zip(values) {
            forecasts[i].value = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailFlag {
    /// `|beta(tau)| < |gamma_tau|`
    Thinner,
    /// `|beta(tau)| > |gamma_tau|`
    Fatter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `beta - gamma`
    pub difference: f64,
    pub flag: Option<TailFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalComparison {
    pub regressor: String,
    pub rows: Vec<ComparisonRow>,
    /// Flag at the lowest tau below one half.
    pub lower_tail: Option<TailFlag>,
    /// Flag at the highest tau above one half.
    pub upper_tail: Option<TailFlag>,
}

impl NormalComparison {
    /// Both tails thinner than the normal.
    pub fn platykurtic(&self) -> bool {
        self.lower_tail == Some(TailFlag::Thinner) && self.upper_tail == Some(TailFlag::Thinner)
    }
}

/// Compares the slope curve of a single-volatility model with the standard
/// normal quantiles. A tail is flagged only when `|beta|` and `|gamma|` differ
/// by more than `tolerance`; the median is never flagged.
pub fn compare_to_normal(fits: &[QuantileFit], tolerance: f64) -> Result<NormalComparison> {
    let first = fits
        .first()
        .ok_or_else(|| Error::InvalidInput("no fits to compare".into()))?;
    if first.beta.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "normal comparison needs a single volatility regressor, fit has {}; compare per column",
            first.beta.len()
        )));
    }
    let regressor = first.beta.keys().next().unwrap().clone();
    let mut rows = Vec::with_capacity(fits.len());
    for f in fits {
        let beta = *f
            .beta
            .get(&regressor)
            .filter(|_| f.beta.len() == 1)
            .ok_or_else(|| Error::InvalidInput("fits do not share one regressor layout".into()))?;
        let gamma = normal_quantile(f.tau)?;
        let flag = if f.tau == 0.5 {
            None
        } else if beta.abs() < gamma.abs() - tolerance {
            Some(TailFlag::Thinner)
        } else if beta.abs() > gamma.abs() + tolerance {
            Some(TailFlag::Fatter)
        } else {
            None
        };
        rows.push(ComparisonRow {
            tau: f.tau,
            beta,
            gamma,
            difference: beta - gamma,
            flag,
        });
    }
    let lower_tail = rows
        .iter()
        .filter(|r| r.tau < 0.5)
        .min_by(|a, b| a.tau.total_cmp(&b.tau))
        .and_then(|r| r.flag);
    let upper_tail = rows
        .iter()
        .filter(|r| r.tau > 0.5)
        .max_by(|a, b| a.tau.total_cmp(&b.tau))
        .and_then(|r| r.flag);
    Ok(NormalComparison {
        regressor,
        rows,
        lower_tail,
        upper_tail,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub tau: f64,
    pub model: ModelTag,
    pub observations: usize,
    pub violations: usize,
    /// Fraction of forecasts with realised return strictly below the forecast.
    pub rate: f64,
    /// `sqrt(tau (1 - tau) / n)`, the binomial standard error under correct coverage.
    pub binomial_se: f64,
}

/// Unconditional violation rate per (model, tau).
pub fn violation_rate(
    forecasts: &[VaRForecast],
    realized: &[ReturnSeries],
) -> Result<Vec<CoverageRow>> {
    let lookup: HashMap<(&str, NaiveDate), f64> = realized
        .iter()
        .flat_map(|s| {
            s.dates
                .iter()
                .zip(&s.returns)
                .map(move |(d, r)| ((s.instrument.as_str(), *d), *r))
        })
        .collect();
    let mut acc: BTreeMap<(ModelTag, u64), (f64, usize, usize)> = BTreeMap::new();
    for f in forecasts {
        let r = lookup.get(&(f.asset.as_str(), f.date)).ok_or_else(|| {
            Error::Data(format!("no realised return for {} on {}", f.asset, f.date))
        })?;
        let e = acc
            .entry((f.model, f.tau.to_bits()))
            .or_insert((f.tau, 0, 0));
        e.1 += 1;
        if *r < f.value {
            e.2 += 1;
        }
    }
    let mut rows: Vec<CoverageRow> = acc
        .into_iter()
        .map(|((model, _), (tau, n, v))| CoverageRow {
            tau,
            model,
            observations: n,
            violations: v,
            rate: v as f64 / n as f64,
            binomial_se: (tau * (1.0 - tau) / n as f64).sqrt(),
        })
        .collect();
    rows.sort_by(|a, b| a.model.cmp(&b.model).then(a.tau.total_cmp(&b.tau)));
    Ok(rows)
}

/// `asset,date,tau,model,value`
pub fn write_forecasts_csv(path: &Path, forecasts: &[VaRForecast]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| wrap_csv(path, e))?;
    w.write_record(["asset", "date", "tau", "model", "value"])?;
    for f in forecasts {
        w.write_record([
            f.asset.as_str(),
            &f.date.to_string(),
            &sig10(f.tau),
            f.model.as_str(),
            &sig10(f.value),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panelqr::SolverReport;
    use indexmap::IndexMap;

    fn fit(tau: f64, alpha: &[(&str, f64)], beta: &[(&str, f64)]) -> QuantileFit {
        QuantileFit {
            tau,
            alpha: alpha
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect::<IndexMap<_, _>>(),
            beta: beta
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect::<IndexMap<_, _>>(),
            objective: 0.0,
            solver: SolverReport {
                iterations: 0,
                status: crate::panelqr::SolverStatus::Optimal,
                gap: 0.0,
                dual_infeasibility: 0.0,
            },
        }
    }

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 12, 31).unwrap()
    }

    #[test]
    fn parametric_examples() {
        assert!((parametric_var(0.05, 0.01).unwrap() + 0.016449).abs() < 1e-6);
        assert_eq!(parametric_var(0.5, 0.37).unwrap(), 0.0);
        assert!((parametric_var(0.95, 0.02).unwrap() - 0.032897).abs() < 1e-6);
        assert!(parametric_var(0.05, -0.01).is_err());
        for tau in [0.01, 0.1, 0.33] {
            let a = parametric_var(tau, 0.013).unwrap();
            let b = parametric_var(1.0 - tau, 0.013).unwrap();
            assert!((a + b).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_distribution_symmetry() {
        let r = ReferenceDistribution::new(&crate::panelqr::TABLE_TAUS).unwrap();
        assert_eq!(r.gamma[3], 0.0);
        assert!((r.gamma[0] + 1.6448536).abs() < 1e-7);
        for i in 0..7 {
            assert!((r.gamma[i] + r.gamma[6 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn forecast_from_panel_coefficients() {
        let f = fit(0.05, &[("CL", -0.009)], &[("rv_sqrt", -1.167)]);
        let v = forecast_var(&f, &[0.016], "CL", day(), ModelTag::Rv).unwrap();
        assert!((v.value + 0.027672).abs() < 1e-12);
        let flat = fit(0.05, &[("CL", -0.009)], &[("rv_sqrt", 0.0)]);
        assert_eq!(
            forecast_var(&flat, &[0.5], "CL", day(), ModelTag::Rv)
                .unwrap()
                .value,
            -0.009
        );
        assert!(forecast_var(&f, &[0.016], "GC", day(), ModelTag::Rv).is_err());
        assert!(forecast_var(&f, &[0.016, 0.1], "CL", day(), ModelTag::Rv).is_err());
    }

    #[test]
    fn forecast_is_linear_in_regressors() {
        let f = fit(
            0.1,
            &[("GC", 0.002)],
            &[("rv_sqrt", -0.8), ("vol_daily", -0.4)],
        );
        let g = |x: &[f64]| {
            forecast_var(&f, x, "GC", day(), ModelTag::RvIndex)
                .unwrap()
                .value
                - 0.002
        };
        let (a, b) = ([0.01, 0.02], [0.005, -0.03]);
        let sum = [a[0] + 2.0 * b[0], a[1] + 2.0 * b[1]];
        assert!((g(&sum) - g(&a) - 2.0 * g(&b)).abs() < 1e-15);
    }

    #[test]
    fn thinner_lower_tail_flagged() {
        let fits = vec![
            fit(0.05, &[("CL", 0.0)], &[("rv_sqrt", -1.11)]),
            fit(0.5, &[("CL", 0.0)], &[("rv_sqrt", 0.041)]),
            fit(0.95, &[("CL", 0.0)], &[("rv_sqrt", 1.052)]),
        ];
        let c = compare_to_normal(&fits, 0.0).unwrap();
        assert_eq!(c.rows[0].flag, Some(TailFlag::Thinner));
        assert_eq!(c.rows[1].flag, None);
        assert!(c.platykurtic());
    }

    #[test]
    fn exact_normal_has_no_flags_and_ignores_fixed_effects() {
        let taus = [0.05, 0.25, 0.5, 0.75, 0.95];
        let fits: Vec<_> = taus
            .iter()
            .map(|t| {
                fit(
                    *t,
                    &[("CL", 0.3)],
                    &[("rv_sqrt", normal_quantile(*t).unwrap())],
                )
            })
            .collect();
        let c = compare_to_normal(&fits, 0.0).unwrap();
        assert!(c
            .rows
            .iter()
            .all(|r| r.flag.is_none() && r.difference == 0.0));
        let shifted: Vec<_> = fits
            .iter()
            .map(|f| {
                let mut g = f.clone();
                g.alpha["CL"] += 5.0;
                g
            })
            .collect();
        assert_eq!(compare_to_normal(&shifted, 0.0).unwrap(), c);
    }

    #[test]
    fn multi_regressor_comparison_is_rejected() {
        let f = fit(
            0.05,
            &[("CL", 0.0)],
            &[("rv_sqrt", -1.0), ("vol_daily", -1.0)],
        );
        assert!(compare_to_normal(&[f], 0.0).is_err());
    }

    #[test]
    fn coverage_counts() {
        let d0 = NaiveDate::from_ymd_opt(2015, 1, 5).unwrap();
        let dates: Vec<NaiveDate> = (0..4).map(|i| d0 + chrono::Days::new(i)).collect();
        let realized =
            vec![ReturnSeries::new("CL", dates.clone(), vec![-0.05, 0.01, -0.002, 0.03]).unwrap()];
        let mk = |v: f64, d: NaiveDate| VaRForecast {
            asset: "CL".into(),
            date: d,
            tau: 0.05,
            model: ModelTag::Rv,
            value: v,
        };
        let deep: Vec<_> = dates.iter().map(|d| mk(-1e9, *d)).collect();
        assert_eq!(violation_rate(&deep, &realized).unwrap()[0].rate, 0.0);
        let some: Vec<_> = dates.iter().map(|d| mk(-0.001, *d)).collect();
        let row = &violation_rate(&some, &realized).unwrap()[0];
        assert_eq!(row.violations, 2);
        assert_eq!(row.rate, 0.5);
        assert!((row.binomial_se - (0.05f64 * 0.95 / 4.0).sqrt()).abs() < 1e-15);
        let orphan = vec![mk(0.0, d0 + chrono::Days::new(30))];
        assert!(violation_rate(&orphan, &realized).is_err());
    }

    #[test]
    fn rearrangement_restores_monotonicity() {
        let mk = |tau: f64, v: f64| VaRForecast {
            asset: "CL".into(),
            date: day(),
            tau,
            model: ModelTag::Rv,
            value: v,
        };
        let mut f = vec![mk(0.05, -0.01), mk(0.10, -0.02), mk(0.5, 0.0)];
        rearrange_forecasts(&mut f);
        assert_eq!(
            f.iter().map(|x| x.value).collect::<Vec<_>>(),
            vec![-0.02, -0.01, 0.0]
        );
    }
}
