//! Synthetic location-scale panels with known conditional quantiles, and a
//! brute-force quantile-regression oracle for small problems.
//!
//! Log realized volatility follows an AR(1) per asset and the next-day return
//! is `a_i + RV_{i,t} z_{i,t+1}`, so the true conditional quantile is
//! `a_i + RV_{i,t} F_z^{-1}(tau)`.

use chrono::{Datelike, NaiveDate, Weekday};
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::implied::{VolIndexSeries, TRADING_DAYS_PER_YEAR};
use crate::marketdata::{RealizedVolSeries, ReturnSeries};
use crate::panelqr::{build_panel, solver::rho, BalancePolicy, PanelDataset, RegressorColumn};
use crate::varengine::normal_quantile;

/// Generator behind every seeded stream in this crate.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9)";

/// Deterministic generator for `seed`.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum Innovation {
    Normal,
    /// Unscaled Student-t with `nu` degrees of freedom.
    StudentT {
        nu: f64,
    },
    /// Uniform on `[-1, 1]`.
    Uniform,
}

impl Innovation {
    /// `F_z^{-1}(tau)`
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidInput(format!(
                "tau must lie in (0, 1), got {tau}"
            )));
        }
        match *self {
            Innovation::Normal => normal_quantile(tau),
            Innovation::StudentT { nu } => StudentsT::new(0.0, 1.0, nu)
                .map(|d| d.inverse_cdf(tau))
                .map_err(|e| Error::InvalidInput(e.to_string())),
            Innovation::Uniform => Ok(2.0 * tau - 1.0),
        }
    }
}

/// Log-AR(1) for realized volatility:
/// `ln RV_t = mean + persistence (ln RV_{t-1} - mean) + scale e_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolProcess {
    pub mean: f64,
    pub persistence: f64,
    pub scale: f64,
}

impl Default for VolProcess {
    fn default() -> Self {
        Self {
            mean: 0.015f64.ln(),
            persistence: 0.9,
            scale: 0.2,
        }
    }
}

/// Implied volatility index that carries no information beyond RV:
/// daily vol is `RV_t exp(noise e_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpliedSpec {
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_assets: usize,
    pub n_days: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// One constant per asset; empty means all zero.
    pub fixed_effects: Vec<f64>,
    pub innovation: Innovation,
    pub vol: VolProcess,
    pub implied: Option<ImpliedSpec>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::new(7, 1000, Innovation::Normal, 0)
    }
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2007, 5, 10).unwrap()
}

impl SynthSpec {
    pub fn new(n_assets: usize, n_days: usize, innovation: Innovation, seed: u64) -> Self {
        Self {
            n_assets,
            n_days,
            fixed_effects: Vec::new(),
            vol: VolProcess::default(),
            innovation,
            seed,
            implied: None,
            start_date: default_start(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_assets == 0 || self.n_days < 2 {
            return bad(format!(
                "need at least one asset and two days, got {} x {}",
                self.n_assets, self.n_days
            ));
        }
        if !self.fixed_effects.is_empty() && self.fixed_effects.len() != self.n_assets {
            return bad(format!(
                "{} fixed effects for {} assets",
                self.fixed_effects.len(),
                self.n_assets
            ));
        }
        if !(0.0..1.0).contains(&self.vol.persistence) {
            return bad(format!(
                "persistence must lie in [0, 1), got {}",
                self.vol.persistence
            ));
        }
        if !(self.vol.scale > 0.0) || !self.vol.mean.is_finite() {
            return bad("volatility scale must be positive and mean finite".into());
        }
        if let Innovation::StudentT { nu } = self.innovation {
            if !(nu > 2.0) {
                return bad(format!(
                    "student-t degrees of freedom must exceed 2, got {nu}"
                ));
            }
        }
        if let Some(i) = self.implied {
            if !(i.noise >= 0.0) {
                return bad("implied noise must be non-negative".into());
            }
        }
        Ok(())
    }

    pub fn asset_names(&self) -> Vec<String> {
        (1..=self.n_assets).map(|i| format!("A{i}")).collect()
    }
}

/// True quantile function of a generated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueQuantiles {
    pub innovation: Innovation,
    pub alpha: IndexMap<String, f64>,
}

impl TrueQuantiles {
    /// Slope on lagged RV: `F_z^{-1}(tau)`.
    pub fn beta(&self, tau: f64) -> Result<f64> {
        self.innovation.quantile(tau)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub returns: Vec<ReturnSeries>,
    pub realized: Vec<RealizedVolSeries>,
    pub implied: Vec<VolIndexSeries>,
    /// Returns on RV (`rv_sqrt`), plus `vol_daily` when an index is generated.
    pub panel: PanelDataset,
    pub truth: TrueQuantiles,
}

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

fn draw<R: Rng>(law: &Innovation, rng: &mut R) -> f64 {
    match *law {
        Innovation::Normal => Normal::new(0.0, 1.0).unwrap().sample(rng),
        Innovation::StudentT { nu } => StudentT::new(nu).unwrap().sample(rng),
        Innovation::Uniform => Uniform::new_inclusive(-1.0, 1.0).unwrap().sample(rng),
    }
}

/// Simulates `n_days + 1` business days per asset; the panel pairs each
/// return with the previous day's RV and so spans `n_days` dates.
pub fn generate_panel(spec: &SynthSpec) -> Result<SyntheticPanel> {
    spec.validate()?;
    let names = spec.asset_names();
    let dates = business_days(spec.start_date, spec.n_days + 1);
    let fe = |i: usize| spec.fixed_effects.get(i).copied().unwrap_or(0.0);
    let VolProcess {
        mean,
        persistence: phi,
        scale,
    } = spec.vol;
    let stationary_sd = scale / (1.0 - phi * phi).sqrt();
    let std = Normal::new(0.0, 1.0).unwrap();

    let mut rng = seeded_rng(spec.seed);
    let (mut returns, mut realized, mut implied) = (Vec::new(), Vec::new(), Vec::new());
    for (i, name) in names.iter().enumerate() {
        // RV for the day before the first date drives the first return.
        let mut log_rv = mean + stationary_sd * std.sample(&mut rng);
        let mut rv = Vec::with_capacity(dates.len());
        let mut ret = Vec::with_capacity(dates.len());
        for _ in &dates {
            ret.push(fe(i) + log_rv.exp() * draw(&spec.innovation, &mut rng));
            log_rv = mean + phi * (log_rv - mean) + scale * std.sample(&mut rng);
            rv.push(log_rv.exp());
        }
        if let Some(imp) = spec.implied {
            let levels: Vec<f64> = rv
                .iter()
                .map(|v| {
                    100.0
                        * TRADING_DAYS_PER_YEAR.sqrt()
                        * v
                        * (imp.noise * std.sample(&mut rng)).exp()
                })
                .collect();
            implied.push(VolIndexSeries::from_levels(
                name.clone(),
                dates.clone(),
                levels,
            )?);
        }
        returns.push(ReturnSeries::new(name.clone(), dates.clone(), ret)?);
        realized.push(RealizedVolSeries::new(name.clone(), dates.clone(), rv)?);
    }

    let mut cols = vec![RegressorColumn::from_series("rv_sqrt", &realized)];
    if !implied.is_empty() {
        cols.push(RegressorColumn::from_series("vol_daily", &implied));
    }
    let panel = build_panel(&returns, &cols, BalancePolicy::Strict)?.panel;
    Ok(SyntheticPanel {
        returns,
        realized,
        implied,
        panel,
        truth: TrueQuantiles {
            innovation: spec.innovation,
            alpha: names
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, n)| (n, fe(i)))
                .collect(),
        },
    })
}

/// Dummy-variable design of a panel: `(y, x)` with `x` row-major over
/// `n_assets + n_regressors` columns, fixed effects first.
pub fn design_matrix(data: &PanelDataset) -> (Vec<f64>, Vec<f64>) {
    let na = data.n_assets();
    let mut y = Vec::with_capacity(data.n_obs());
    let mut x = Vec::new();
    for a in 0..na {
        for t in 0..data.n_dates() {
            y.push(data.y(a, t));
            x.extend((0..na).map(|c| if c == a { 1.0 } else { 0.0 }));
            x.extend_from_slice(data.x_row(a, t));
        }
    }
    (y, x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub parameters: Vec<f64>,
    pub objective: f64,
    pub bases_enumerated: usize,
}

pub const ORACLE_MAX_OBS: usize = 25;
pub const ORACLE_MAX_PARAMS: usize = 4;

/// Solves `a z = b` for a `k x k` row-major system; `None` when singular.
fn gauss_solve(mut a: Vec<f64>, mut b: Vec<f64>, k: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..k {
        let piv =
            (col..k).max_by(|&i, &j| a[i * k + col].abs().total_cmp(&a[j * k + col].abs()))?;
        if a[piv * k + col].abs() <= 1e-12 * scale {
            return None;
        }
        if piv != col {
            for c in 0..k {
                a.swap(piv * k + c, col * k + c);
            }
            b.swap(piv, col);
        }
        for r in col + 1..k {
            let f = a[r * k + col] / a[col * k + col];
            if f != 0.0 {
                for c in col..k {
                    a[r * k + c] -= f * a[col * k + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut z = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| a[r * k + c] * z[c]).sum();
        z[r] = (b[r] - s) / a[r * k + r];
    }
    Some(z)
}

/// Exact minimizer of `sum rho_tau(y - x theta)` by enumerating every basic
/// solution. Ties within `1e-12` relative go to the lexicographically
/// smallest parameter vector.
pub fn oracle_qr(y: &[f64], x: &[f64], k: usize, tau: f64) -> Result<OracleResult> {
    let n = y.len();
    if k == 0 || x.len() != n * k {
        return Err(Error::InvalidInput(format!(
            "design has {} cells for {n} x {k}",
            x.len()
        )));
    }
    if n > ORACLE_MAX_OBS || k > ORACLE_MAX_PARAMS || n < k {
        return Err(Error::InvalidInput(format!(
            "oracle handles k <= n <= {ORACLE_MAX_OBS} and k <= {ORACLE_MAX_PARAMS}, got n = {n}, k = {k}"
        )));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    let objective = |theta: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let fit: f64 = (0..k).map(|j| x[i * k + j] * theta[j]).sum();
                rho(y[i] - fit, tau)
            })
            .sum()
    };
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut enumerated = 0;
    loop {
        enumerated += 1;
        let a: Vec<f64> = idx
            .iter()
            .flat_map(|&i| x[i * k..(i + 1) * k].iter().copied())
            .collect();
        let b: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        if let Some(theta) = gauss_solve(a, b, k) {
            candidates.push((objective(&theta), theta));
        }
        // next k-subset in lexicographic order
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == n - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        idx[pos - 1] += 1;
        for j in pos..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    let best = candidates
        .iter()
        .map(|c| c.0)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Numerical("every basis is singular".into()))?;
    let tol = 1e-12 * best.abs().max(1.0);
    let (objective, parameters) = candidates
        .into_iter()
        .filter(|c| c.0 <= best + tol)
        .min_by(|a, b| {
            a.1.iter()
                .zip(&b.1)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    Ok(OracleResult {
        parameters,
        objective,
        bases_enumerated: enumerated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panelqr::fit_panel_qr;

    #[test]
    fn seeded_generation_is_reproducible() {
        let spec = SynthSpec::new(3, 50, Innovation::Normal, 9);
        let a = generate_panel(&spec).unwrap();
        let b = generate_panel(&spec).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.returns, b.returns);
        let c = generate_panel(&SynthSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.panel, c.panel);
    }

    #[test]
    fn analytic_quantiles() {
        assert!((Innovation::Normal.quantile(0.95).unwrap() - 1.6448536).abs() < 1e-6);
        assert_eq!(Innovation::Uniform.quantile(0.05).unwrap(), -0.9);
        // closed form for four degrees of freedom
        let t4 = |p: f64| {
            let a = 4.0 * p * (1.0 - p);
            let q = ((a.sqrt().acos() / 3.0).cos() / a.sqrt() - 1.0).sqrt() * 2.0;
            if p < 0.5 {
                -q
            } else {
                q
            }
        };
        let law = Innovation::StudentT { nu: 4.0 };
        for p in [0.05, 0.1, 0.25, 0.75, 0.95] {
            assert!((law.quantile(p).unwrap() - t4(p)).abs() < 1e-9, "p = {p}");
        }
        assert!((law.quantile(0.95).unwrap() - 2.1318).abs() < 1e-4);
    }

    #[test]
    fn invalid_specs_rejected() {
        let ok = SynthSpec::new(2, 10, Innovation::Normal, 1);
        let mut s = ok.clone();
        s.vol.persistence = 1.0;
        assert!(generate_panel(&s).is_err());
        let mut s = ok.clone();
        s.innovation = Innovation::StudentT { nu: 2.0 };
        assert!(generate_panel(&s).is_err());
        let mut s = ok.clone();
        s.fixed_effects = vec![0.1];
        assert!(generate_panel(&s).is_err());
        let mut s = ok;
        s.vol.scale = 0.0;
        assert!(generate_panel(&s).is_err());
    }

    #[test]
    fn standardized_innovations_have_unit_moments() {
        let mut spec = SynthSpec::new(4, 2000, Innovation::Normal, 3);
        spec.fixed_effects = vec![0.01, -0.02, 0.0, 0.005];
        let s = generate_panel(&spec).unwrap();
        let p = &s.panel;
        let mut z = Vec::new();
        for a in 0..p.n_assets() {
            for t in 0..p.n_dates() {
                z.push((p.y(a, t) - spec.fixed_effects[a]) / p.x_row(a, t)[0]);
            }
        }
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 / n.sqrt());
        assert!((var - 1.0).abs() < 3.0 / n.sqrt());
    }

    #[test]
    fn panel_lags_volatility_and_spans_business_days() {
        let mut spec = SynthSpec::new(2, 5, Innovation::Uniform, 4);
        spec.implied = Some(ImpliedSpec { noise: 0.0 });
        let s = generate_panel(&spec).unwrap();
        assert_eq!(s.panel.n_dates(), 5);
        assert_eq!(
            s.panel.regressors(),
            &["rv_sqrt".to_string(), "vol_daily".to_string()]
        );
        assert!(s.returns[0]
            .dates
            .iter()
            .all(|d| d.weekday().num_days_from_monday() < 5));
        assert_eq!(s.panel.x_row(0, 0)[0], s.realized[0].rv_sqrt[0]);
        assert!((s.panel.x_row(0, 0)[1] - s.realized[0].rv_sqrt[0]).abs() < 1e-15);
        assert_eq!(s.panel.y(0, 0), s.returns[0].returns[1]);
    }

    #[test]
    fn oracle_small_cases() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let x = [1.0; 5];
        let r = oracle_qr(&y, &x, 1, 0.5).unwrap();
        assert_eq!(r.parameters, vec![3.0]);
        assert_eq!(r.objective, 3.0);
        assert_eq!(r.bases_enumerated, 5);

        let xs = [0.5, 1.0, 2.0, 3.5];
        let x2: Vec<f64> = xs.iter().flat_map(|v| [1.0, *v]).collect();
        let y2: Vec<f64> = xs.iter().map(|v| 2.0 * v).collect();
        let r = oracle_qr(&y2, &x2, 2, 0.3).unwrap();
        assert_eq!(r.objective, 0.0);
        assert!(r.parameters[0].abs() < 1e-12 && (r.parameters[1] - 2.0).abs() < 1e-12);

        assert!(oracle_qr(&[1.0; 26], &[1.0; 26], 1, 0.5).is_err());
        assert!(oracle_qr(&[1.0, 2.0], &[0.0, 0.0], 1, 0.5).is_err());
    }

    #[test]
    fn oracle_beats_random_parameters_and_matches_solver() {
        let mut rng = seeded_rng(12);
        for _ in 0..10 {
            let mut spec = SynthSpec::new(2, 7, Innovation::StudentT { nu: 5.0 }, rng.random());
            spec.fixed_effects = vec![0.01, -0.01];
            let s = generate_panel(&spec).unwrap();
            let tau = rng.random_range(0.05..0.95);
            let (y, x) = design_matrix(&s.panel);
            let r = oracle_qr(&y, &x, 3, tau).unwrap();
            for _ in 0..1000 {
                let theta: Vec<f64> = (0..3)
                    .map(|_| rng.random_range(-0.1..0.1) * if rng.random() { 30.0 } else { 1.0 })
                    .collect();
                let obj: f64 = (0..y.len())
                    .map(|i| {
                        rho(
                            y[i] - (0..3).map(|j| x[i * 3 + j] * theta[j]).sum::<f64>(),
                            tau,
                        )
                    })
                    .sum();
                assert!(r.objective <= obj + 1e-15);
            }
            let f = fit_panel_qr(&s.panel, tau).unwrap();
            assert!((f.objective - r.objective).abs() <= 1e-8 * r.objective.max(1e-12));
        }
    }
}
