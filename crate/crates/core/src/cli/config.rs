use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::BootstrapConfig;
use crate::marketdata::SplitBoundary;
use crate::panelqr::{validate_tau_grid, BalancePolicy, TABLE_TAUS};
use crate::synth::{SynthSpec, RNG_ALGORITHM};
use crate::varengine::ModelTag;

/// Volatility regressors of a model specification.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    /// Realized volatility only.
    Rv,
    /// Implied volatility index only.
    Index,
    /// Both volatility measures.
    Both,
}

impl ModelChoice {
    pub fn tag(self) -> ModelTag {
        match self {
            ModelChoice::Rv => ModelTag::Rv,
            ModelChoice::Index => ModelTag::Index,
            ModelChoice::Both => ModelTag::RvIndex,
        }
    }

    pub fn file_tag(self) -> &'static str {
        match self {
            ModelChoice::Rv => "rv",
            ModelChoice::Index => "index",
            ModelChoice::Both => "both",
        }
    }

    pub fn regressors(self) -> &'static [&'static str] {
        match self {
            ModelChoice::Rv => &[RV_COLUMN],
            ModelChoice::Index => &[INDEX_COLUMN],
            ModelChoice::Both => &[RV_COLUMN, INDEX_COLUMN],
        }
    }

    pub fn uses_index(self) -> bool {
        self != ModelChoice::Rv
    }
}

pub const RV_COLUMN: &str = "rv_sqrt";
pub const INDEX_COLUMN: &str = "vol_daily";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub ticks: Option<PathBuf>,
    pub calendar: Option<PathBuf>,
    pub returns: Option<PathBuf>,
    pub realized: Option<PathBuf>,
    /// Parsed index file (`instrument,date,index_annual,vol_daily`).
    pub index: Option<PathBuf>,
    /// Raw published index files, one per instrument.
    pub index_sources: Vec<IndexSource>,
    pub estimates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexSource {
    pub instrument: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub interval_minutes: u32,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            interval_minutes: 5,
        }
    }
}

/// Bootstrap settings; the seed comes from the run seed. Zero replicates
/// turns inference off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSettings {
    pub replicates: usize,
    pub block_length: usize,
    pub confidence_level: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        Self {
            replicates: d.replicates,
            block_length: d.block_length,
            confidence_level: d.confidence_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Random generator used for every seeded stream; informational.
    pub rng: String,
    pub taus: Vec<f64>,
    pub models: Vec<ModelChoice>,
    /// `PRE_END:POST_START`; sub-samples are estimated alongside the full sample.
    pub split: Option<String>,
    pub balance: BalancePolicy,
    /// Gap between `|beta|` and `|gamma|` needed before a tail is flagged.
    pub tail_tolerance: f64,
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub bootstrap: BootstrapSettings,
    pub simulate: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            seed: 0,
            rng: RNG_ALGORITHM.to_string(),
            taus: TABLE_TAUS.to_vec(),
            models: vec![ModelChoice::Rv],
            split: None,
            balance: BalancePolicy::Intersect,
            tail_tolerance: 0.0,
            paths: PathsConfig::default(),
            ingest: IngestConfig::default(),
            bootstrap: BootstrapSettings::default(),
            simulate: SynthSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        validate_tau_grid(&self.taus).map_err(|e| Error::Config(e.to_string()))?;
        if self.models.is_empty() {
            return Err(Error::Config("no model selected".into()));
        }
        self.split_boundary()?;
        self.bootstrap_config()?;
        if !(self.tail_tolerance >= 0.0) {
            return Err(Error::Config("tail tolerance must be non-negative".into()));
        }
        Ok(())
    }

    pub fn split_boundary(&self) -> Result<Option<SplitBoundary>> {
        self.split
            .as_deref()
            .map(SplitBoundary::parse)
            .transpose()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// `None` when inference is switched off.
    pub fn bootstrap_config(&self) -> Result<Option<BootstrapConfig>> {
        if self.bootstrap.replicates == 0 {
            return Ok(None);
        }
        let cfg = BootstrapConfig {
            replicates: self.bootstrap.replicates,
            seed: self.seed,
            block_length: self.bootstrap.block_length,
            confidence_level: self.bootstrap.confidence_level,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(Some(cfg))
    }

    /// Writes the effective configuration to `<output_dir>/run_config.toml`.
    pub fn echo(&self) -> Result<()> {
        let path = self.output_dir.join("run_config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Config(format!("no {what} path given (flag or [paths] key)")))
    }
}

/// Parses `0.05,0.5,0.95`.
pub fn parse_taus(s: &str) -> Result<Vec<f64>> {
    let taus = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad tau `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    validate_tau_grid(&taus).map_err(|e| Error::Config(e.to_string()))?;
    Ok(taus)
}
