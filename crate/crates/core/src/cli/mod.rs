//! Command-line interface: `volquant <subcommand>`.
//!
//! Every run starts from a TOML [`RunConfig`] (or the defaults), applies the
//! command-line overrides and echoes the effective configuration into the
//! output directory. Exit codes: 0 ok, 1 usage or config, 2 data, 3 numerical.

pub mod config;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::implied::{parse_index_csv, read_index_csv, write_index_csv};
use crate::inference::{bootstrap_fit, confidence_bands, write_bands_csv, InferenceReport};
use crate::marketdata::{
    build_bars, open_close_returns, read_realized_vol, read_returns, read_ticks,
    realized_volatility, write_bars_csv, write_daily_csv, TradingCalendar,
};
use crate::synth::{generate_panel, ImpliedSpec, Innovation};
use crate::varengine::write_forecasts_csv;

pub use config::{parse_taus, ModelChoice, RunConfig};
pub use pipeline::{estimate_all, forecast_all, write_report, write_tables, EstimatesFile, Inputs};

#[derive(Debug, Parser)]
#[command(
    name = "volquant",
    version,
    about = "Semi-parametric VaR from realized and implied volatility"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated, strictly increasing quantile levels.
    #[arg(long, global = true)]
    pub taus: Option<String>,
    /// Model specification; repeat to run several.
    #[arg(long, global = true, value_enum)]
    pub model: Vec<ModelChoice>,
    /// Sample split `PRE_END:POST_START`.
    #[arg(long, global = true)]
    pub split: Option<String>,
    /// Bootstrap replicates (0 disables inference).
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ticks to 5-minute bars, open-close returns and realized volatility.
    IngestTicks {
        #[arg(long)]
        ticks: Option<PathBuf>,
        /// Trading calendar file; defaults to the bundled US futures calendar.
        #[arg(long)]
        calendar: Option<PathBuf>,
        #[arg(long)]
        interval_minutes: Option<u32>,
    },
    /// Published volatility indexes to daily implied volatility.
    ParseIndex {
        /// `INSTRUMENT=PATH`, repeatable.
        #[arg(long = "input", value_parser = parse_source)]
        inputs: Vec<(String, PathBuf)>,
    },
    /// Panel quantile regressions per sub-sample and model, with bootstrap t-statistics.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Bootstrap reports and pointwise confidence bands.
    Bootstrap {
        #[command(flatten)]
        data: DataArgs,
    },
    /// VaR forecasts, their coverage, and next-day VaR.
    Forecast {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Figure data from a previous `estimate` run.
    Report {
        #[arg(long)]
        estimates: Option<PathBuf>,
    },
    /// Synthetic panel with known conditional quantiles.
    Simulate {
        #[arg(long)]
        n_assets: Option<usize>,
        #[arg(long)]
        n_days: Option<usize>,
        /// `normal`, `uniform` or `student-t:NU`.
        #[arg(long, value_parser = parse_innovation)]
        innovation: Option<Innovation>,
        /// Also generate an implied volatility index with this log noise.
        #[arg(long)]
        implied_noise: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub returns: Option<PathBuf>,
    #[arg(long)]
    pub realized: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
}

fn parse_source(s: &str) -> std::result::Result<(String, PathBuf), String> {
    s.split_once('=')
        .map(|(i, p)| (i.to_string(), PathBuf::from(p)))
        .ok_or_else(|| format!("expected INSTRUMENT=PATH, got `{s}`"))
}

fn parse_innovation(s: &str) -> std::result::Result<Innovation, String> {
    match s {
        "normal" => Ok(Innovation::Normal),
        "uniform" => Ok(Innovation::Uniform),
        _ => s
            .strip_prefix("student-t:")
            .and_then(|nu| nu.parse().ok())
            .map(|nu| Innovation::StudentT { nu })
            .ok_or_else(|| format!("unknown innovation law `{s}`")),
    }
}

/// Configuration after applying the command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = &g.taus {
        cfg.taus = parse_taus(t)?;
    }
    if !g.model.is_empty() {
        cfg.models = g.model.clone();
    }
    if let Some(s) = &g.split {
        cfg.split = Some(s.clone());
    }
    if let Some(b) = g.replicates {
        cfg.bootstrap.replicates = b;
    }
    match &cli.command {
        Command::IngestTicks {
            ticks,
            calendar,
            interval_minutes,
        } => {
            set(&mut cfg.paths.ticks, ticks);
            set(&mut cfg.paths.calendar, calendar);
            if let Some(m) = interval_minutes {
                cfg.ingest.interval_minutes = *m;
            }
        }
        Command::ParseIndex { inputs } => {
            if !inputs.is_empty() {
                cfg.paths.index_sources = inputs
                    .iter()
                    .map(|(instrument, path)| config::IndexSource {
                        instrument: instrument.clone(),
                        path: path.clone(),
                    })
                    .collect();
            }
        }
        Command::Estimate { data } | Command::Bootstrap { data } | Command::Forecast { data } => {
            set(&mut cfg.paths.returns, &data.returns);
            set(&mut cfg.paths.realized, &data.realized);
            set(&mut cfg.paths.index, &data.index);
        }
        Command::Report { estimates } => set(&mut cfg.paths.estimates, estimates),
        Command::Simulate {
            n_assets,
            n_days,
            innovation,
            implied_noise,
        } => {
            let s = &mut cfg.simulate;
            if let Some(n) = n_assets {
                s.n_assets = *n;
            }
            if let Some(n) = n_days {
                s.n_days = *n;
            }
            if let Some(i) = innovation {
                s.innovation = *i;
            }
            if let Some(noise) = implied_noise {
                s.implied = Some(ImpliedSpec { noise: *noise });
            }
        }
    }
    cfg.simulate.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn set(target: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        target.clone_from(value);
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match effective_config(&cli).and_then(|cfg| execute(&cli.command, &cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_inputs(cfg: &RunConfig, need_index: bool) -> Result<Inputs> {
    let returns = read_returns(cfg.require(&cfg.paths.returns, "returns")?)?;
    let realized = match &cfg.paths.realized {
        Some(p) => read_realized_vol(p)?,
        None => Vec::new(),
    };
    let index = match (&cfg.paths.index, need_index) {
        (Some(p), _) => read_index_csv(p)?,
        (None, true) => {
            return Err(Error::Config(
                "index models need an index file (--index)".into(),
            ))
        }
        (None, false) => Vec::new(),
    };
    Ok(Inputs {
        returns,
        realized,
        index,
    })
}

fn prepare_output(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    cfg.echo()
}

/// Runs one subcommand against an effective configuration.
pub fn execute(command: &Command, cfg: &RunConfig) -> Result<()> {
    let need_index = cfg.models.iter().any(|m| m.uses_index());
    let out = &cfg.output_dir;
    match command {
        Command::IngestTicks { .. } => {
            let ticks_path = cfg.require(&cfg.paths.ticks, "ticks")?;
            let calendar = match &cfg.paths.calendar {
                Some(p) => TradingCalendar::load(p)?,
                None => TradingCalendar::us_futures_default(),
            };
            let ticks = read_ticks(ticks_path)?;
            prepare_output(cfg)?;
            let interval = chrono::Duration::minutes(i64::from(cfg.ingest.interval_minutes));
            let built = build_bars(&ticks, &calendar, interval)?;
            let returns = open_close_returns(&built.bars)?;
            let rv = realized_volatility(&built.bars)?;
            write_bars_csv(&out.join("bars.csv"), &built.bars)?;
            write_daily_csv(&out.join("returns.csv"), &returns.series)?;
            write_daily_csv(&out.join("realized.csv"), &rv.series)?;
            let r = &built.report;
            eprintln!(
                "ticks={} instrument_days={} rejected_ticks={} outside_session_ticks={} excluded_days={} empty_sessions={} dropped_days={}",
                ticks.len(),
                built.bars.len(),
                r.rejected_ticks,
                r.outside_session_ticks,
                r.excluded_days,
                r.empty_sessions.len(),
                rv.dropped_days.len()
            );
        }
        Command::ParseIndex { .. } => {
            if cfg.paths.index_sources.is_empty() {
                return Err(Error::Config(
                    "no index inputs (--input INSTRUMENT=PATH)".into(),
                ));
            }
            let mut series = Vec::new();
            for src in &cfg.paths.index_sources {
                let parsed = parse_index_csv(&src.path, &src.instrument)?;
                eprintln!(
                    "{}: rows={} missing={}",
                    src.instrument,
                    parsed.series.dates.len(),
                    parsed.missing
                );
                series.push(parsed.series);
            }
            prepare_output(cfg)?;
            write_index_csv(&out.join("index.csv"), &series)?;
        }
        Command::Estimate { .. } => {
            let inputs = load_inputs(cfg, need_index)?;
            let est = estimate_all(&inputs, cfg)?;
            prepare_output(cfg)?;
            write_tables(out, &est)?;
            let path = out.join("estimates.json");
            std::fs::write(&path, serde_json::to_string_pretty(&est)?)
                .map_err(|e| Error::io(&path, e))?;
        }
        Command::Bootstrap { .. } => {
            let inputs = load_inputs(cfg, need_index)?;
            let b = cfg
                .bootstrap_config()?
                .ok_or_else(|| Error::Config("bootstrap needs at least 2 replicates".into()))?;
            let mut all: Vec<(String, ModelChoice, Vec<InferenceReport>)> = Vec::new();
            for (name, keep) in pipeline::samples(cfg)? {
                let sub = inputs.filter(&keep);
                for m in &cfg.models {
                    let panel = sub.panel(*m, cfg)?;
                    let reports = cfg
                        .taus
                        .iter()
                        .map(|tau| bootstrap_fit(&panel, *tau, &b))
                        .collect::<Result<Vec<_>>>()?;
                    all.push((name.clone(), *m, reports));
                }
            }
            prepare_output(cfg)?;
            for (name, m, reports) in &all {
                let stem = format!("{name}_{}", m.file_tag());
                let bands = confidence_bands(reports)?;
                write_bands_csv(&out.join(format!("bands_{stem}.csv")), &bands)?;
                let path = out.join(format!("bootstrap_{stem}.json"));
                std::fs::write(&path, serde_json::to_string_pretty(reports)?)
                    .map_err(|e| Error::io(&path, e))?;
            }
        }
        Command::Forecast { .. } => {
            let inputs = load_inputs(cfg, need_index)?;
            let run = forecast_all(&inputs, cfg)?;
            prepare_output(cfg)?;
            write_forecasts_csv(&out.join("forecasts.csv"), &run.evaluated)?;
            write_forecasts_csv(&out.join("next_day.csv"), &run.next_day)?;
            pipeline::write_coverage_csv(&out.join("coverage.csv"), &run.coverage)?;
        }
        Command::Report { .. } => {
            let default = out.join("estimates.json");
            let path = cfg.paths.estimates.as_deref().unwrap_or(&default);
            let est = EstimatesFile::read(path)?;
            prepare_output(cfg)?;
            write_report(out, &est, cfg.tail_tolerance)?;
        }
        Command::Simulate { .. } => {
            let s = generate_panel(&cfg.simulate)?;
            prepare_output(cfg)?;
            write_daily_csv(&out.join("returns.csv"), &s.returns)?;
            write_daily_csv(&out.join("realized.csv"), &s.realized)?;
            if !s.implied.is_empty() {
                write_index_csv(&out.join("index.csv"), &s.implied)?;
            }
            let truth: Vec<(f64, f64)> = cfg
                .taus
                .iter()
                .map(|t| Ok((*t, s.truth.beta(*t)?)))
                .collect::<Result<_>>()?;
            let doc = serde_json::json!({
                "innovation": s.truth.innovation,
                "alpha": s.truth.alpha,
                "beta": truth.iter().map(|(t, b)| serde_json::json!({"tau": t, "beta": b})).collect::<Vec<_>>(),
            });
            let path = out.join("truth.json");
            std::fs::write(&path, serde_json::to_string_pretty(&doc)?)
                .map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
