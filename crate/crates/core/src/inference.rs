//! Day-slice bootstrap for panel quantile regression: standard errors,
//! t-statistics, percentile intervals and pointwise confidence bands.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::{estimate_cell, sig10};
use crate::marketdata::wrap_csv;
use crate::panelqr::{fit_panel_qr, fit_panel_qr_with, FitOptions, PanelDataset, QuantileFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Consecutive dates drawn together; 1 resamples days independently.
    pub block_length: usize,
    pub confidence_level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            seed: 0,
            block_length: 1,
            confidence_level: 0.95,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidInput(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if self.block_length == 0 {
            return Err(Error::InvalidInput("block length must be positive".into()));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(Error::InvalidInput(format!(
                "confidence level must lie in (0, 1), got {}",
                self.confidence_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterInference {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    /// `estimate / se`; absent when every replicate gave the same value.
    pub t_stat: Option<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub tau: f64,
    pub confidence_level: f64,
    pub replicates: usize,
    /// Replicates that failed to solve and were drawn again.
    pub redraws: usize,
    /// Fixed effects first, then slopes.
    pub parameters: Vec<ParameterInference>,
}

impl InferenceReport {
    /// Summarizes replicate estimates (`replicates[b][j]`) around the point fit.
    pub fn from_replicates(
        point: &QuantileFit,
        replicates: &[Vec<f64>],
        confidence_level: f64,
    ) -> Result<Self> {
        let names = point.parameter_names();
        let theta = point.theta();
        if replicates.len() < 2 {
            return Err(Error::InvalidInput(
                "need at least 2 replicate estimates".into(),
            ));
        }
        if replicates.iter().any(|r| r.len() != theta.len()) {
            return Err(Error::InvalidInput(
                "replicate estimates do not match the parameter count".into(),
            ));
        }
        let lo_p = (1.0 - confidence_level) / 2.0;
        let hi_p = (1.0 + confidence_level) / 2.0;
        let parameters = names
            .into_iter()
            .zip(theta)
            .enumerate()
            .map(|(j, (name, estimate))| {
                let mut draws: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
                draws.sort_by(f64::total_cmp);
                let se = sample_sd(&draws);
                ParameterInference {
                    name,
                    estimate,
                    se,
                    t_stat: (se > 0.0).then(|| estimate / se),
                    ci_low: percentile(&draws, lo_p),
                    ci_high: percentile(&draws, hi_p),
                }
            })
            .collect();
        Ok(Self {
            tau: point.tau,
            confidence_level,
            replicates: replicates.len(),
            redraws: 0,
            parameters,
        })
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterInference> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

fn sample_sd(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let ss: f64 = sorted.iter().map(|v| (v - mean) * (v - mean)).sum();
    if sorted.first() == sorted.last() {
        0.0
    } else {
        (ss / (n - 1.0)).sqrt()
    }
}

/// Linear interpolation between order statistics (`h = (n-1) p`).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Date multiplicities of one block-bootstrap draw over `n` dates.
pub fn resample_counts<R: Rng>(rng: &mut R, n: usize, block_length: usize) -> Vec<f64> {
    let l = block_length.min(n).max(1);
    let mut counts = vec![0.0; n];
    let mut drawn = 0;
    while drawn < n {
        let start = rng.random_range(0..=n - l);
        for c in counts.iter_mut().skip(start).take((n - drawn).min(l)) {
            *c += 1.0;
        }
        drawn += l;
    }
    counts
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Pairs bootstrap over trading dates: each draw keeps every asset's
/// observation of the drawn date. Replicates use their own random stream, so
/// the report does not depend on thread scheduling.
pub fn bootstrap_fit(
    data: &PanelDataset,
    tau: f64,
    cfg: &BootstrapConfig,
) -> Result<InferenceReport> {
    cfg.validate()?;
    let point = fit_panel_qr(data, tau)?;
    let start = point.theta();
    let cap = 10 * cfg.replicates;
    let outcomes: Vec<(Option<Vec<f64>>, usize)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(cfg.seed, b);
            let mut attempts = 0;
            while attempts < cap {
                attempts += 1;
                let w = resample_counts(&mut rng, data.n_dates(), cfg.block_length);
                let opts = FitOptions {
                    date_weights: Some(&w),
                    start: Some(&start),
                };
                if let Ok(f) = fit_panel_qr_with(data, tau, opts) {
                    return (Some(f.theta()), attempts);
                }
            }
            (None, attempts)
        })
        .collect();
    let attempts: usize = outcomes.iter().map(|o| o.1).sum();
    if attempts > cap || outcomes.iter().any(|o| o.0.is_none()) {
        return Err(Error::Numerical(format!(
            "bootstrap at tau = {tau}: {attempts} attempts exceed the cap of {cap}"
        )));
    }
    let draws: Vec<Vec<f64>> = outcomes.into_iter().map(|o| o.0.unwrap()).collect();
    let mut report = InferenceReport::from_replicates(&point, &draws, cfg.confidence_level)?;
    report.redraws = attempts - cfg.replicates;
    Ok(report)
}

/// Pointwise interval of one parameter over a tau grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub parameter: String,
    pub taus: Vec<f64>,
    /// Point estimates; absent for intersections.
    pub estimate: Option<Vec<f64>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// True where the interval is empty (lower above upper).
    pub empty: Vec<bool>,
}

/// One band per parameter, sorted by tau.
pub fn confidence_bands(reports: &[InferenceReport]) -> Result<Vec<Band>> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidInput("no reports to combine".into()))?;
    let names: Vec<&str> = first.parameters.iter().map(|p| p.name.as_str()).collect();
    for r in reports {
        if r.parameters
            .iter()
            .map(|p| p.name.as_str())
            .ne(names.iter().copied())
        {
            return Err(Error::InvalidInput(format!(
                "report at tau = {} has a different parameter set",
                r.tau
            )));
        }
    }
    let mut order: Vec<&InferenceReport> = reports.iter().collect();
    order.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    Ok(names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let pick = |f: fn(&ParameterInference) -> f64| {
                order
                    .iter()
                    .map(|r| f(&r.parameters[j]))
                    .collect::<Vec<_>>()
            };
            let lower = pick(|p| p.ci_low);
            let upper = pick(|p| p.ci_high);
            Band {
                parameter: name.to_string(),
                taus: order.iter().map(|r| r.tau).collect(),
                estimate: Some(pick(|p| p.estimate)),
                empty: lower.iter().zip(&upper).map(|(l, u)| l > u).collect(),
                lower,
                upper,
            }
        })
        .collect())
}

/// Pointwise intersection: max of the lower edges, min of the upper edges.
pub fn intersect_bands(bands: &[Band]) -> Result<Band> {
    let first = bands
        .first()
        .ok_or_else(|| Error::InvalidInput("no bands to intersect".into()))?;
    let mut lower = first.lower.clone();
    let mut upper = first.upper.clone();
    for b in &bands[1..] {
        if b.taus != first.taus {
            return Err(Error::InvalidInput(format!(
                "bands for `{}` are on different tau grids",
                b.parameter
            )));
        }
        if b.parameter != first.parameter {
            return Err(Error::InvalidInput(format!(
                "cannot intersect bands of `{}` and `{}`",
                first.parameter, b.parameter
            )));
        }
        for i in 0..lower.len() {
            lower[i] = lower[i].max(b.lower[i]);
            upper[i] = upper[i].min(b.upper[i]);
        }
    }
    Ok(Band {
        parameter: first.parameter.clone(),
        taus: first.taus.clone(),
        estimate: None,
        empty: lower.iter().zip(&upper).map(|(l, u)| l > u).collect(),
        lower,
        upper,
    })
}

/// Parameters as rows, tau levels as columns, cells `estimate (t)`.
pub fn write_table_csv(path: &Path, reports: &[InferenceReport]) -> Result<()> {
    let mut order: Vec<&InferenceReport> = reports.iter().collect();
    order.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    let mut names: Vec<&str> = Vec::new();
    for r in &order {
        for p in &r.parameters {
            if !names.contains(&p.name.as_str()) {
                names.push(&p.name);
            }
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| wrap_csv(path, e))?;
    let mut header = vec!["parameter".to_string()];
    header.extend(order.iter().map(|r| format!("{}", r.tau)));
    w.write_record(&header)?;
    for name in names {
        let mut row = vec![name.to_string()];
        row.extend(order.iter().map(|r| {
            r.parameter(name)
                .map_or(String::new(), |p| estimate_cell(p.estimate, p.t_stat))
        }));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// `parameter,tau,estimate,lower,upper,empty`
pub fn write_bands_csv(path: &Path, bands: &[Band]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| wrap_csv(path, e))?;
    w.write_record(["parameter", "tau", "estimate", "lower", "upper", "empty"])?;
    for b in bands {
        for i in 0..b.taus.len() {
            let est = b.estimate.as_ref().map_or(String::new(), |e| sig10(e[i]));
            w.write_record([
                b.parameter.as_str(),
                &sig10(b.taus[i]),
                &est,
                &sig10(b.lower[i]),
                &sig10(b.upper[i]),
                if b.empty[i] { "true" } else { "false" },
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panelqr::{SolverReport, SolverStatus};
    use chrono::NaiveDate;

    fn point(alpha: f64, beta: f64) -> QuantileFit {
        QuantileFit {
            tau: 0.5,
            alpha: [("CL".to_string(), alpha)].into_iter().collect(),
            beta: [("rv_sqrt".to_string(), beta)].into_iter().collect(),
            objective: 0.0,
            solver: SolverReport {
                iterations: 0,
                status: SolverStatus::Optimal,
                gap: 0.0,
                dual_infeasibility: 0.0,
            },
        }
    }

    fn panel(n_assets: usize, n_dates: usize, seed: u64) -> PanelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d0 = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        let x: Vec<f64> = (0..n_assets * n_dates)
            .map(|_| rng.random_range(0.5..2.0))
            .collect();
        let y: Vec<f64> = x.iter().map(|s| s * rng.random_range(-1.0..1.0)).collect();
        PanelDataset::new(
            (0..n_assets).map(|a| format!("A{a}")).collect(),
            (0..n_dates)
                .map(|i| d0 + chrono::Days::new(i as u64))
                .collect(),
            vec!["rv_sqrt".into()],
            y,
            x,
        )
        .unwrap()
    }

    #[test]
    fn identical_replicates_give_missing_t() {
        let r = InferenceReport::from_replicates(
            &point(0.1, -1.0),
            &[vec![0.1, -1.0], vec![0.1, -1.0]],
            0.95,
        )
        .unwrap();
        assert_eq!(r.parameters[1].se, 0.0);
        assert_eq!(r.parameters[1].t_stat, None);
        assert_eq!(r.parameters[1].ci_low, -1.0);
        assert_eq!(r.parameters[1].ci_high, -1.0);
    }

    #[test]
    fn statistics_from_known_draws() {
        let draws: Vec<Vec<f64>> = (1..=5).map(|v| vec![0.0, v as f64]).collect();
        let r = InferenceReport::from_replicates(&point(0.0, 2.0), &draws, 0.5).unwrap();
        let p = &r.parameters[1];
        assert!((p.se - 2.5f64.sqrt()).abs() < 1e-15);
        assert!((p.t_stat.unwrap() - 2.0 / 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!((p.ci_low, p.ci_high), (2.0, 4.0));
        // t is built on the point estimate, not the replicate mean
        let r = InferenceReport::from_replicates(&point(0.0, 10.0), &draws, 0.5).unwrap();
        assert!((r.parameters[1].t_stat.unwrap() - 10.0 / 2.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn se_ignores_replicate_order() {
        let mut draws: Vec<Vec<f64>> = [0.3, -1.2, 0.7, 2.2, 0.1]
            .iter()
            .map(|v| vec![0.0, *v])
            .collect();
        let a = InferenceReport::from_replicates(&point(0.0, 0.5), &draws, 0.9).unwrap();
        draws.reverse();
        draws.swap(0, 3);
        let b = InferenceReport::from_replicates(&point(0.0, 0.5), &draws, 0.9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let ok = BootstrapConfig::default();
        assert!(ok.validate().is_ok());
        assert!(BootstrapConfig {
            replicates: 1,
            ..ok
        }
        .validate()
        .is_err());
        assert!(BootstrapConfig {
            confidence_level: 1.0,
            ..ok
        }
        .validate()
        .is_err());
        assert!(BootstrapConfig {
            block_length: 0,
            ..ok
        }
        .validate()
        .is_err());
    }

    #[test]
    fn counts_sum_to_sample_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for l in [1, 3, 7, 50] {
            let c = resample_counts(&mut rng, 23, l);
            assert_eq!(c.iter().sum::<f64>(), 23.0);
        }
    }

    #[test]
    fn seeded_bootstrap_is_reproducible() {
        let p = panel(3, 60, 2);
        let cfg = BootstrapConfig {
            replicates: 40,
            seed: 17,
            ..Default::default()
        };
        let a = bootstrap_fit(&p, 0.25, &cfg).unwrap();
        let b = bootstrap_fit(&p, 0.25, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let beta = a.parameter("rv_sqrt").unwrap();
        assert!(beta.se > 0.0);
        assert!(beta.ci_low <= beta.ci_high);
        let c = bootstrap_fit(&p, 0.25, &BootstrapConfig { seed: 18, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    fn band(lo: f64, hi: f64) -> Band {
        Band {
            parameter: "rv_sqrt".into(),
            taus: vec![0.5],
            estimate: None,
            lower: vec![lo],
            upper: vec![hi],
            empty: vec![false],
        }
    }

    #[test]
    fn intersections() {
        let b = intersect_bands(&[band(-1.0, 1.0), band(0.0, 2.0)]).unwrap();
        assert_eq!((b.lower[0], b.upper[0], b.empty[0]), (0.0, 1.0, false));
        let e = intersect_bands(&[band(-2.0, -1.0), band(1.0, 2.0)]).unwrap();
        assert!(e.empty[0]);
        let same = intersect_bands(&[band(-1.0, 1.0), band(-1.0, 1.0)]).unwrap();
        assert_eq!(same, band(-1.0, 1.0));
        let mut other = band(0.0, 1.0);
        other.taus = vec![0.25];
        assert!(intersect_bands(&[band(0.0, 1.0), other]).is_err());
    }

    #[test]
    fn single_tau_band_is_the_interval() {
        let draws: Vec<Vec<f64>> = (1..=5).map(|v| vec![0.0, v as f64]).collect();
        let r = InferenceReport::from_replicates(&point(0.0, 2.0), &draws, 0.5).unwrap();
        let bands = confidence_bands(std::slice::from_ref(&r)).unwrap();
        assert_eq!(bands[1].lower, vec![2.0]);
        assert_eq!(bands[1].upper, vec![4.0]);
        let mut other = r.clone();
        other.parameters[1].name = "vol_daily".into();
        assert!(confidence_bands(&[r, other]).is_err());
    }
}
