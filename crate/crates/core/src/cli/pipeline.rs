//! Estimation, report and forecast stages behind the subcommands.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;
use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cli::config::{ModelChoice, RunConfig, INDEX_COLUMN, RV_COLUMN};
use crate::error::{Error, Result};
use crate::fmt::sig10;
use crate::implied::VolIndexSeries;
use crate::inference::{
    bootstrap_fit, confidence_bands, intersect_bands, write_table_csv, Band, InferenceReport,
};
use crate::marketdata::{
    descriptive_stats, wrap_csv, DatedSeries, RealizedVolSeries, ReturnSeries, StatsSummary,
};
use crate::panelqr::{
    build_panel, fit_each_asset, fit_panel_qr, fit_quantile_curve, Crossing, PanelDataset,
    QuantileFit, RegressorColumn,
};
use crate::varengine::{
    compare_to_normal, normal_quantile, parametric_var, violation_rate, CoverageRow, ModelTag,
    TailFlag, VaRForecast,
};

/// Daily inputs of the estimation stage.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub returns: Vec<ReturnSeries>,
    pub realized: Vec<RealizedVolSeries>,
    pub index: Vec<VolIndexSeries>,
}

impl Inputs {
    /// Keeps the rows whose date satisfies `keep`.
    pub fn filter(&self, keep: &dyn Fn(NaiveDate) -> bool) -> Self {
        Self {
            returns: self.returns.iter().map(|s| s.filter_dates(keep)).collect(),
            realized: self.realized.iter().map(|s| s.filter_dates(keep)).collect(),
            index: self.index.iter().map(|s| s.filter_dates(keep)).collect(),
        }
    }

    /// Panel of next-day returns on the model's lagged regressors. Models
    /// with the index use only assets that have one.
    pub fn panel(&self, model: ModelChoice, cfg: &RunConfig) -> Result<PanelDataset> {
        let returns: Vec<ReturnSeries> = if model.uses_index() {
            let have: BTreeSet<&str> = self.index.iter().map(|s| s.instrument.as_str()).collect();
            self.returns
                .iter()
                .filter(|r| have.contains(r.instrument.as_str()))
                .cloned()
                .collect()
        } else {
            self.returns.clone()
        };
        if returns.is_empty() {
            return Err(Error::Data(format!(
                "no asset has the inputs for the {} model",
                model.tag()
            )));
        }
        let cols: Vec<RegressorColumn> = model
            .regressors()
            .iter()
            .map(|name| match *name {
                RV_COLUMN => RegressorColumn::from_series(RV_COLUMN, &self.realized),
                _ => RegressorColumn::from_series(INDEX_COLUMN, &self.index),
            })
            .collect();
        let built = build_panel(&returns, &cols, cfg.balance)?;
        if !built.dropped.is_empty() {
            log::warn!(
                "{} model: {} asset-dates dropped to balance the panel",
                model.tag(),
                built.dropped.len()
            );
        }
        Ok(built.panel)
    }
}

pub type DateFilter = Box<dyn Fn(NaiveDate) -> bool + Sync>;

/// Named sub-samples: always `full`, plus `pre` and `post` with a split.
pub fn samples(cfg: &RunConfig) -> Result<Vec<(String, DateFilter)>> {
    let mut out: Vec<(String, DateFilter)> = vec![("full".into(), Box::new(|_| true))];
    if let Some(b) = cfg.split_boundary()? {
        out.push(("pre".into(), Box::new(move |d| b.is_pre(d))));
        out.push(("post".into(), Box::new(move |d| b.is_post(d))));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateFit {
    pub asset: String,
    pub tau: f64,
    pub alpha: f64,
    pub beta: IndexMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEstimates {
    pub model: ModelChoice,
    pub assets: Vec<String>,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub observations: usize,
    /// Full coefficient sets, fixed effects included.
    pub fits: Vec<QuantileFit>,
    pub crossings: Vec<Crossing>,
    /// Empty when inference is off.
    pub inference: Vec<InferenceReport>,
    pub univariate: Vec<UnivariateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEstimates {
    pub sample: String,
    pub models: Vec<ModelEstimates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveRow {
    pub sample: String,
    pub series: String,
    pub asset: String,
    #[serde(flatten)]
    pub stats: StatsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatesFile {
    pub taus: Vec<f64>,
    pub confidence_level: Option<f64>,
    pub samples: Vec<SampleEstimates>,
    pub descriptive: Vec<DescriptiveRow>,
}

impl EstimatesFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn descriptive(sample: &str, inputs: &Inputs) -> Result<Vec<DescriptiveRow>> {
    let mut rows = Vec::new();
    let mut push = |series: &str, asset: &str, values: &[f64]| -> Result<()> {
        if values.len() >= 2 {
            rows.push(DescriptiveRow {
                sample: sample.to_string(),
                series: series.to_string(),
                asset: asset.to_string(),
                stats: descriptive_stats(values)?,
            });
        }
        Ok(())
    };
    for s in &inputs.returns {
        push("returns", &s.instrument, &s.returns)?;
    }
    for s in &inputs.realized {
        push(RV_COLUMN, &s.instrument, &s.rv_sqrt)?;
    }
    for s in &inputs.index {
        push("index_annual", &s.instrument, &s.index_annual)?;
    }
    Ok(rows)
}

fn estimate_model(
    panel: &PanelDataset,
    model: ModelChoice,
    cfg: &RunConfig,
) -> Result<ModelEstimates> {
    let curve = fit_quantile_curve(panel, &cfg.taus)?;
    let inference = match cfg.bootstrap_config()? {
        Some(b) => cfg
            .taus
            .iter()
            .map(|tau| bootstrap_fit(panel, *tau, &b))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let univariate = cfg
        .taus
        .par_iter()
        .map(|tau| fit_each_asset(panel, *tau))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .map(|f| UnivariateFit {
            asset: f.alpha.keys().next().unwrap().clone(),
            tau: f.tau,
            alpha: f.alpha[0],
            beta: f.beta,
        })
        .collect();
    Ok(ModelEstimates {
        model,
        assets: panel.assets().to_vec(),
        first_date: panel.dates()[0],
        last_date: *panel.dates().last().unwrap(),
        observations: panel.n_obs(),
        fits: curve.fits,
        crossings: curve.crossings,
        inference,
        univariate,
    })
}

/// Point fits, bootstrap inference and univariate fits for every sub-sample
/// and model, plus descriptive statistics of the inputs.
pub fn estimate_all(inputs: &Inputs, cfg: &RunConfig) -> Result<EstimatesFile> {
    cfg.validate()?;
    let mut samples_out = Vec::new();
    let mut descriptive_rows = Vec::new();
    for (name, keep) in samples(cfg)? {
        let sub = inputs.filter(&keep);
        descriptive_rows.extend(descriptive(&name, &sub)?);
        let models = cfg
            .models
            .iter()
            .map(|m| estimate_model(&sub.panel(*m, cfg)?, *m, cfg))
            .collect::<Result<Vec<_>>>()?;
        samples_out.push(SampleEstimates {
            sample: name,
            models,
        });
    }
    Ok(EstimatesFile {
        taus: cfg.taus.clone(),
        confidence_level: cfg.bootstrap_config()?.map(|b| b.confidence_level),
        samples: samples_out,
        descriptive: descriptive_rows,
    })
}

/// Writes `table_<sample>_<model>.csv` for each estimate set. Slopes come
/// first, then the fixed effects; cells are `estimate (t)`.
pub fn write_tables(dir: &Path, est: &EstimatesFile) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for s in &est.samples {
        for m in &s.models {
            let path = dir.join(format!("table_{}_{}.csv", s.sample, m.model.file_tag()));
            let reports = if m.inference.is_empty() {
                m.fits.iter().map(point_only_report).collect()
            } else {
                m.inference.clone()
            };
            write_table_csv(&path, &slopes_first(reports))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn point_only_report(f: &QuantileFit) -> InferenceReport {
    InferenceReport {
        tau: f.tau,
        confidence_level: f64::NAN,
        replicates: 0,
        redraws: 0,
        parameters: f
            .parameter_names()
            .into_iter()
            .zip(f.theta())
            .map(|(name, estimate)| crate::inference::ParameterInference {
                name,
                estimate,
                se: f64::NAN,
                t_stat: None,
                ci_low: f64::NAN,
                ci_high: f64::NAN,
            })
            .collect(),
    }
}

fn slopes_first(mut reports: Vec<InferenceReport>) -> Vec<InferenceReport> {
    for r in &mut reports {
        r.parameters.sort_by_key(|p| p.name.starts_with("alpha_"));
    }
    reports
}

fn is_slope(name: &str) -> bool {
    !name.starts_with("alpha_")
}

/// File names emitted by [`write_report`].
pub const REPORT_FILES: [&str; 4] = [
    "coefficient_curves.csv",
    "normal_overlay.csv",
    "univariate_estimates.csv",
    "descriptive_stats.csv",
];

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| wrap_csv(path, e))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: f64) -> String {
    if v.is_finite() {
        sig10(v)
    } else {
        String::new()
    }
}

fn model_bands(m: &ModelEstimates) -> Result<Vec<Band>> {
    if m.inference.is_empty() {
        return Ok(Vec::new());
    }
    confidence_bands(&m.inference)
}

/// Plot-ready figure data: slope curves with bands, the standard normal
/// overlay with the band intersection across sub-samples, univariate
/// estimates per asset, and descriptive statistics.
pub fn write_report(dir: &Path, est: &EstimatesFile, tail_tolerance: f64) -> Result<()> {
    let path = dir.join(REPORT_FILES[0]);
    let mut w = csv_writer(&path)?;
    w.write_record([
        "sample",
        "model",
        "parameter",
        "tau",
        "estimate",
        "lower",
        "upper",
    ])?;
    for s in &est.samples {
        for m in &s.models {
            let bands = model_bands(m)?;
            for f in &m.fits {
                for (name, b) in &f.beta {
                    let band = bands.iter().find(|x| &x.parameter == name);
                    let i = band.and_then(|x| x.taus.iter().position(|t| *t == f.tau));
                    let (lo, hi) = match (band, i) {
                        (Some(x), Some(i)) => (x.lower[i], x.upper[i]),
                        _ => (f64::NAN, f64::NAN),
                    };
                    w.write_record([
                        s.sample.as_str(),
                        m.model.tag().as_str(),
                        name,
                        &sig10(f.tau),
                        &sig10(*b),
                        &opt(lo),
                        &opt(hi),
                    ])?;
                }
            }
        }
    }
    finish(w, &path)?;

    let path = dir.join(REPORT_FILES[1]);
    let mut w = csv_writer(&path)?;
    w.write_record([
        "model", "series", "tau", "gamma", "beta", "lower", "upper", "flag", "empty",
    ])?;
    let models: BTreeSet<ModelChoice> = est
        .samples
        .iter()
        .flat_map(|s| s.models.iter().map(|m| m.model))
        .collect();
    for model in models.into_iter().filter(|m| m.regressors().len() == 1) {
        let regressor = model.regressors()[0];
        let mut per_sample_bands = Vec::new();
        for s in &est.samples {
            let Some(m) = s.models.iter().find(|m| m.model == model) else {
                continue;
            };
            let cmp = compare_to_normal(&m.fits, tail_tolerance)?;
            let band = model_bands(m)?
                .into_iter()
                .find(|b| b.parameter == regressor);
            for (i, row) in cmp.rows.iter().enumerate() {
                let (lo, hi) = band
                    .as_ref()
                    .map_or((f64::NAN, f64::NAN), |b| (b.lower[i], b.upper[i]));
                let flag = match row.flag {
                    Some(TailFlag::Thinner) => "thinner",
                    Some(TailFlag::Fatter) => "fatter",
                    None => "",
                };
                w.write_record([
                    model.tag().as_str(),
                    &s.sample,
                    &sig10(row.tau),
                    &sig10(row.gamma),
                    &sig10(row.beta),
                    &opt(lo),
                    &opt(hi),
                    flag,
                    "",
                ])?;
            }
            if let Some(b) = band {
                per_sample_bands.push(b);
            }
        }
        if !per_sample_bands.is_empty() {
            let inter = intersect_bands(&per_sample_bands)?;
            for i in 0..inter.taus.len() {
                w.write_record([
                    model.tag().as_str(),
                    "intersection",
                    &sig10(inter.taus[i]),
                    &sig10(normal_quantile(inter.taus[i])?),
                    "",
                    &sig10(inter.lower[i]),
                    &sig10(inter.upper[i]),
                    "",
                    if inter.empty[i] { "true" } else { "false" },
                ])?;
            }
        }
    }
    finish(w, &path)?;

    let path = dir.join(REPORT_FILES[2]);
    let mut w = csv_writer(&path)?;
    w.write_record(["sample", "model", "asset", "tau", "parameter", "estimate"])?;
    for s in &est.samples {
        for m in &s.models {
            for u in &m.univariate {
                for (name, b) in &u.beta {
                    w.write_record([
                        s.sample.as_str(),
                        m.model.tag().as_str(),
                        &u.asset,
                        &sig10(u.tau),
                        name,
                        &sig10(*b),
                    ])?;
                }
            }
        }
    }
    finish(w, &path)?;

    let path = dir.join(REPORT_FILES[3]);
    let mut w = csv_writer(&path)?;
    w.write_record([
        "sample",
        "series",
        "asset",
        "mean",
        "st_dev",
        "skewness",
        "excess_kurtosis",
        "median",
        "minimum",
        "maximum",
    ])?;
    for r in &est.descriptive {
        let s = &r.stats;
        w.write_record([
            r.sample.as_str(),
            &r.series,
            &r.asset,
            &sig10(s.mean),
            &sig10(s.st_dev),
            &s.skewness.map_or(String::new(), sig10),
            &s.excess_kurtosis.map_or(String::new(), sig10),
            &sig10(s.median),
            &sig10(s.minimum),
            &sig10(s.maximum),
        ])?;
    }
    finish(w, &path)
}

/// Forecasts and their coverage, plus next-day VaR from the latest inputs.
#[derive(Debug, Clone)]
pub struct ForecastRun {
    /// Forecasts for dates with a realised return.
    pub evaluated: Vec<VaRForecast>,
    pub coverage: Vec<CoverageRow>,
    /// One step past the last observed date.
    pub next_day: Vec<VaRForecast>,
}

fn next_business_day(d: NaiveDate) -> NaiveDate {
    use chrono::{Datelike, Weekday};
    d.iter_days()
        .skip(1)
        .find(|x| !matches!(x.weekday(), Weekday::Sat | Weekday::Sun))
        .unwrap()
}

/// Fits every model on the estimation window (the pre-split sample when a
/// split is set, otherwise everything) and forecasts each panel date of the
/// evaluation window (post-split, or in-sample). The Gaussian benchmark uses
/// lagged RV as sigma.
pub fn forecast_all(inputs: &Inputs, cfg: &RunConfig) -> Result<ForecastRun> {
    cfg.validate()?;
    let split = cfg.split_boundary()?;
    let (fit_inputs, eval_inputs) = match split {
        Some(b) => (
            inputs.filter(&|d| b.is_pre(d)),
            inputs.filter(&|d| b.is_post(d)),
        ),
        None => (inputs.clone(), inputs.clone()),
    };
    let mut evaluated = Vec::new();
    let mut next_day = Vec::new();
    for model in &cfg.models {
        let fit_panel = fit_inputs.panel(*model, cfg)?;
        let eval_panel = eval_inputs.panel(*model, cfg)?;
        let fits = cfg
            .taus
            .par_iter()
            .map(|tau| fit_panel_qr(&fit_panel, *tau))
            .collect::<Result<Vec<_>>>()?;
        for f in &fits {
            for (a, asset) in eval_panel.assets().iter().enumerate() {
                for (t, date) in eval_panel.dates().iter().enumerate() {
                    evaluated.push(crate::varengine::forecast_var(
                        f,
                        eval_panel.x_row(a, t),
                        asset,
                        *date,
                        model.tag(),
                    )?);
                }
            }
        }
        // latest regressor values per asset
        for f in &fits {
            for asset in eval_panel.assets() {
                let x = latest_regressors(inputs, asset, *model)?;
                let date = next_business_day(x.0);
                next_day.push(crate::varengine::forecast_var(
                    f,
                    &x.1,
                    asset,
                    date,
                    model.tag(),
                )?);
            }
        }
        if *model == ModelChoice::Rv {
            for tau in &cfg.taus {
                for (a, asset) in eval_panel.assets().iter().enumerate() {
                    for (t, date) in eval_panel.dates().iter().enumerate() {
                        evaluated.push(VaRForecast {
                            asset: asset.clone(),
                            date: *date,
                            tau: *tau,
                            model: ModelTag::Parametric,
                            value: parametric_var(*tau, eval_panel.x_row(a, t)[0])?,
                        });
                    }
                }
            }
        }
    }
    let coverage = violation_rate(&evaluated, &eval_inputs.returns)?;
    Ok(ForecastRun {
        evaluated,
        coverage,
        next_day,
    })
}

fn latest_regressors(
    inputs: &Inputs,
    asset: &str,
    model: ModelChoice,
) -> Result<(NaiveDate, Vec<f64>)> {
    let last =
        |dates: &[NaiveDate], values: &[f64]| dates.last().copied().zip(values.last().copied());
    let rv = inputs
        .realized
        .iter()
        .find(|s| s.instrument == asset)
        .and_then(|s| last(&s.dates, &s.rv_sqrt));
    let ix = inputs
        .index
        .iter()
        .find(|s| s.instrument == asset)
        .and_then(|s| last(&s.dates, &s.vol_daily));
    let missing = || Error::Data(format!("no latest regressor values for {asset}"));
    match model {
        ModelChoice::Rv => rv.map(|(d, v)| (d, vec![v])).ok_or_else(missing),
        ModelChoice::Index => ix.map(|(d, v)| (d, vec![v])).ok_or_else(missing),
        ModelChoice::Both => {
            let (d1, v1) = rv.ok_or_else(missing)?;
            let (d2, v2) = ix.ok_or_else(missing)?;
            if d1 != d2 {
                return Err(Error::Data(format!(
                    "{asset}: latest RV ({d1}) and index ({d2}) dates differ"
                )));
            }
            Ok((d1, vec![v1, v2]))
        }
    }
}

/// `model,tau,observations,violations,rate,binomial_se`
pub fn write_coverage_csv(path: &Path, rows: &[CoverageRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "model",
        "tau",
        "observations",
        "violations",
        "rate",
        "binomial_se",
    ])?;
    for r in rows {
        w.write_record([
            r.model.as_str(),
            &sig10(r.tau),
            &r.observations.to_string(),
            &r.violations.to_string(),
            &sig10(r.rate),
            &sig10(r.binomial_se),
        ])?;
    }
    finish(w, path)
}

/// Slopes of a fit set, in table order.
pub fn slope_names(m: &ModelEstimates) -> Vec<String> {
    m.fits
        .first()
        .map(|f| {
            f.parameter_names()
                .into_iter()
                .filter(|n| is_slope(n))
                .collect()
        })
        .unwrap_or_default()
}
