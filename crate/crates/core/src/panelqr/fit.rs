use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panelqr::dataset::PanelDataset;
use crate::panelqr::solver::{self, LinearProblem, SolverReport};

/// A quantile level in the open unit interval.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileSpec(f64);

impl QuantileSpec {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(Error::InvalidInput(format!(
                "tau must lie in (0, 1), got {tau}"
            )))
        }
    }

    pub fn tau(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuantileSpec {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileSpec> for f64 {
    fn from(q: QuantileSpec) -> f64 {
        q.0
    }
}

/// Quantile levels reported in the parameter tables.
pub const TABLE_TAUS: [f64; 7] = [0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95];

/// Estimated conditional quantile model at one `tau`: common slopes and one
/// fixed effect per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub tau: f64,
    pub beta: IndexMap<String, f64>,
    pub alpha: IndexMap<String, f64>,
    pub objective: f64,
    pub solver: SolverReport,
}

impl QuantileFit {
    /// Parameters in design order: fixed effects, then slopes.
    pub fn theta(&self) -> Vec<f64> {
        self.alpha
            .values()
            .chain(self.beta.values())
            .copied()
            .collect()
    }

    /// Parameter names in design order (`alpha_<asset>`, then regressor names).
    pub fn parameter_names(&self) -> Vec<String> {
        self.alpha
            .keys()
            .map(|a| alpha_name(a))
            .chain(self.beta.keys().cloned())
            .collect()
    }

    pub fn predict(&self, asset: &str, x: &[f64]) -> Result<f64> {
        let a = self
            .alpha
            .get(asset)
            .ok_or_else(|| Error::InvalidInput(format!("asset `{asset}` not in fit")))?;
        if x.len() != self.beta.len() {
            return Err(Error::InvalidInput(format!(
                "regressor row has {} values, fit has {} slopes",
                x.len(),
                self.beta.len()
            )));
        }
        Ok(a + self.beta.values().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }
}

pub fn alpha_name(asset: &str) -> String {
    format!("alpha_{asset}")
}

/// Optional inputs of [`fit_panel_qr_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions<'a> {
    /// Non-negative multiplicity per date (bootstrap resampling counts).
    pub date_weights: Option<&'a [f64]>,
    /// Parameter vector in design order used to seed the starting basis.
    pub start: Option<&'a [f64]>,
}

/// Dense dummy-variable design: one intercept column per asset, then the regressors.
struct Design {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    k: usize,
}

fn design(data: &PanelDataset, date_weights: Option<&[f64]>) -> Result<Design> {
    let (na, nt, p) = (data.n_assets(), data.n_dates(), data.n_regressors());
    if let Some(w) = date_weights {
        if w.len() != nt {
            return Err(Error::InvalidInput(format!(
                "{} date weights for {nt} dates",
                w.len()
            )));
        }
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInput(
                "date weights must be non-negative".into(),
            ));
        }
    }
    let k = na + p;
    let mut x = Vec::with_capacity(na * nt * k);
    let mut y = Vec::with_capacity(na * nt);
    let mut w = Vec::with_capacity(na * nt);
    for a in 0..na {
        for t in 0..nt {
            let wt = date_weights.map_or(1.0, |dw| dw[t]);
            if wt == 0.0 {
                continue;
            }
            x.extend((0..na).map(|c| if c == a { 1.0 } else { 0.0 }));
            x.extend_from_slice(data.x_row(a, t));
            y.push(data.y(a, t));
            w.push(wt);
        }
    }
    Ok(Design { x, y, w, k })
}

/// Names the first design column that is linearly dependent on earlier ones.
fn check_rank(d: &Design, names: &[String]) -> Result<()> {
    let n = d.y.len();
    let k = d.k;
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (c, name) in names.iter().enumerate().take(k) {
        let mut v: Vec<f64> = (0..n).map(|i| d.x[i * k + c] * d.w[i].sqrt()).collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for qv in &q {
                let dot: f64 = qv.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(qv).for_each(|(x, qx)| *x -= dot * qx);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= 1e-10 * norm0 {
            return Err(Error::RankDeficient {
                column: name.clone(),
            });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        q.push(v);
    }
    Ok(())
}

pub fn fit_panel_qr(data: &PanelDataset, tau: f64) -> Result<QuantileFit> {
    fit_panel_qr_with(data, tau, FitOptions::default())
}

/// Unpenalized fixed-effects quantile regression: minimizes
/// `sum_{i,t} rho_tau(y_it - alpha_i - x_it' beta)` exactly.
pub fn fit_panel_qr_with(
    data: &PanelDataset,
    tau: f64,
    opts: FitOptions<'_>,
) -> Result<QuantileFit> {
    let tau = QuantileSpec::new(tau)?.tau();
    let d = design(data, opts.date_weights)?;
    let names: Vec<String> = data
        .assets()
        .iter()
        .map(|a| alpha_name(a))
        .chain(data.regressors().iter().cloned())
        .collect();
    if d.y.len() <= d.k {
        return Err(Error::InvalidInput(format!(
            "{} observations cannot identify {} parameters",
            d.y.len(),
            d.k
        )));
    }
    check_rank(&d, &names)?;

    let problem = LinearProblem {
        x: &d.x,
        y: &d.y,
        w: &d.w,
        k: d.k,
    };
    let sol = solver::solve(problem, tau, opts.start)?;
    if !sol.report.status.is_optimal() {
        return Err(Error::Numerical(format!(
            "quantile regression at tau = {tau} ended with status {:?} after {} iterations",
            sol.report.status, sol.report.iterations
        )));
    }
    let na = data.n_assets();
    Ok(QuantileFit {
        tau,
        alpha: data
            .assets()
            .iter()
            .cloned()
            .zip(sol.theta[..na].iter().copied())
            .collect(),
        beta: data
            .regressors()
            .iter()
            .cloned()
            .zip(sol.theta[na..].iter().copied())
            .collect(),
        objective: sol.objective,
        solver: sol.report,
    })
}

/// Single-asset quantile regression; the fixed effect is the intercept.
pub fn fit_univariate_qr(data: &PanelDataset, tau: f64) -> Result<QuantileFit> {
    if data.n_assets() != 1 {
        return Err(Error::InvalidInput(format!(
            "univariate fit needs exactly one asset, got {}",
            data.n_assets()
        )));
    }
    fit_panel_qr(data, tau)
}

/// Univariate fits for every asset of the panel, in asset order.
pub fn fit_each_asset(data: &PanelDataset, tau: f64) -> Result<Vec<QuantileFit>> {
    (0..data.n_assets())
        .into_par_iter()
        .map(|a| fit_univariate_qr(&data.asset_slice(a)?, tau))
        .collect()
}

/// Count of observations whose fitted quantile decreases between two
/// neighbouring levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub tau_low: f64,
    pub tau_high: f64,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCurve {
    pub fits: Vec<QuantileFit>,
    pub crossings: Vec<Crossing>,
}

impl QuantileCurve {
    pub fn has_crossings(&self) -> bool {
        self.crossings.iter().any(|c| c.observations > 0)
    }
}

pub fn validate_tau_grid(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::InvalidInput("empty tau grid".into()));
    }
    for t in taus {
        QuantileSpec::new(*t)?;
    }
    if taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "tau grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Independent fits over a strictly increasing tau grid, with a crossing
/// diagnostic over the in-sample fitted quantiles. Crossings are reported,
/// not corrected.
pub fn fit_quantile_curve(data: &PanelDataset, taus: &[f64]) -> Result<QuantileCurve> {
    validate_tau_grid(taus)?;
    let fits = taus
        .par_iter()
        .map(|&tau| fit_panel_qr(data, tau))
        .collect::<Result<Vec<_>>>()?;
    let crossings = crossing_diagnostic(data, &fits)?;
    Ok(QuantileCurve { fits, crossings })
}

pub fn crossing_diagnostic(data: &PanelDataset, fits: &[QuantileFit]) -> Result<Vec<Crossing>> {
    let mut out = Vec::new();
    for pair in fits.windows(2) {
        let mut count = 0;
        for (a, asset) in data.assets().iter().enumerate() {
            for t in 0..data.n_dates() {
                let lo = pair[0].predict(asset, data.x_row(a, t))?;
                let hi = pair[1].predict(asset, data.x_row(a, t))?;
                if hi < lo - 1e-12 * (1.0 + lo.abs()) {
                    count += 1;
                }
            }
        }
        out.push(Crossing {
            tau_low: pair[0].tau,
            tau_high: pair[1].tau,
            observations: count,
        });
    }
    Ok(out)
}

/// Monotone rearrangement of conditional quantiles ordered by tau: sorts the
/// values so that they are non-decreasing in tau. Not applied by default.
pub fn rearrange_quantiles(values: &mut [f64]) {
    values.sort_by(f64::total_cmp);
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        (0..n).map(|i| d0 + chrono::Days::new(i as u64)).collect()
    }

    fn intercept_only(y: &[f64]) -> PanelDataset {
        PanelDataset::new(vec!["A".into()], dates(y.len()), vec![], y.to_vec(), vec![]).unwrap()
    }

    #[test]
    fn sample_median() {
        let f = fit_panel_qr(&intercept_only(&[1.0, 2.0, 3.0, 4.0, 5.0]), 0.5).unwrap();
        assert_eq!(f.alpha["A"], 3.0);
        assert!(f.beta.is_empty());
        let u = fit_univariate_qr(&intercept_only(&[1.0, 2.0, 3.0, 4.0, 5.0]), 0.5).unwrap();
        assert_eq!(u.alpha["A"], 3.0);
    }

    #[test]
    fn exact_linear_relation_fits_with_zero_loss() {
        let xs = [0.3, 0.9, 1.7, 2.2, 3.1, 0.4];
        let p = PanelDataset::new(
            vec!["A".into()],
            dates(6),
            vec!["x".into()],
            xs.iter().map(|v| 2.0 * v).collect(),
            xs.to_vec(),
        )
        .unwrap();
        for tau in [0.1, 0.5, 0.9] {
            let f = fit_univariate_qr(&p, tau).unwrap();
            assert!((f.beta["x"] - 2.0).abs() < 1e-12);
            assert!(f.alpha["A"].abs() < 1e-12);
            assert!(f.objective.abs() < 1e-14);
        }
    }

    #[test]
    fn constant_regressor_collides_with_fixed_effects() {
        let p = PanelDataset::new(
            vec!["A".into(), "B".into()],
            dates(3),
            vec!["const".into()],
            vec![1.0, 2.0, 3.0, 1.5, 2.5, 3.5],
            vec![1.0; 6],
        )
        .unwrap();
        match fit_panel_qr(&p, 0.5) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "const"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tau_outside_unit_interval() {
        let p = intercept_only(&[1.0, 2.0, 3.0]);
        assert!(fit_panel_qr(&p, 0.0).is_err());
        assert!(fit_panel_qr(&p, 1.0).is_err());
        assert!(fit_quantile_curve(&p, &[0.5, 0.25]).is_err());
    }

    #[test]
    fn too_few_observations() {
        let p = intercept_only(&[1.0]);
        assert!(matches!(fit_panel_qr(&p, 0.5), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn single_tau_curve_matches_direct_fit() {
        let p = intercept_only(&[3.0, 1.0, 4.0, 1.5, 9.0, 2.6]);
        let c = fit_quantile_curve(&p, &[0.3]).unwrap();
        assert_eq!(c.fits, vec![fit_panel_qr(&p, 0.3).unwrap()]);
        assert!(c.crossings.is_empty());
    }

    #[test]
    fn table_grid_accepted() {
        let p = intercept_only(&[3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.3, 5.8]);
        let c = fit_quantile_curve(&p, &TABLE_TAUS).unwrap();
        assert_eq!(c.fits.len(), 7);
        assert!(!c.has_crossings());
    }

    #[test]
    fn rearrangement_sorts() {
        let mut v = [0.1, -0.2, 0.3];
        rearrange_quantiles(&mut v);
        assert_eq!(v, [-0.2, 0.1, 0.3]);
    }

    #[test]
    fn fit_json_shape() {
        let f = fit_panel_qr(&intercept_only(&[1.0, 2.0, 3.0, 4.0, 5.0]), 0.5).unwrap();
        let json = serde_json::to_string(&f).unwrap();
        assert!(json.starts_with(
            r#"{"tau":0.5,"beta":{},"alpha":{"A":3.0},"objective":3.0,"solver":{"iters":"#
        ));
        let back: QuantileFit = serde_json::from_str(&json).unwrap();
        assert_eq!(back.alpha, f.alpha);
    }
}
