use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig10;

/// A per-instrument daily series with strictly increasing dates.
pub trait DatedSeries: Sized {
    fn instrument(&self) -> &str;
    fn dates(&self) -> &[NaiveDate];
    /// The primary value column (returns, `sqrt(RV)`, daily implied vol).
    fn values(&self) -> &[f64];
    /// Keeps only the rows whose date satisfies `keep`.
    fn filter_dates(&self, keep: impl Fn(NaiveDate) -> bool) -> Self;
}

/// Open-close daily log-returns. `returns[k]` is the return realised on `dates[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub instrument: String,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

/// Daily square-root realized variance, in daily log-return units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedVolSeries {
    pub instrument: String,
    pub dates: Vec<NaiveDate>,
    pub rv_sqrt: Vec<f64>,
}

impl RealizedVolSeries {
    /// Days whose realized volatility is exactly zero (no price movement on the grid).
    /// They stay in the series as ordinary observations.
    pub fn zero_days(&self) -> Vec<NaiveDate> {
        self.dates
            .iter()
            .zip(&self.rv_sqrt)
            .filter(|(_, v)| **v == 0.0)
            .map(|(d, _)| *d)
            .collect()
    }
}

fn check_dates(instrument: &str, dates: &[NaiveDate], len: usize) -> Result<()> {
    if dates.len() != len {
        return Err(Error::Data(format!(
            "{instrument}: {} dates but {len} values",
            dates.len()
        )));
    }
    if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::Data(format!(
            "{instrument}: dates not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

impl ReturnSeries {
    pub fn new(
        instrument: impl Into<String>,
        dates: Vec<NaiveDate>,
        returns: Vec<f64>,
    ) -> Result<Self> {
        let instrument = instrument.into();
        check_dates(&instrument, &dates, returns.len())?;
        Ok(Self {
            instrument,
            dates,
            returns,
        })
    }
}

impl RealizedVolSeries {
    pub fn new(
        instrument: impl Into<String>,
        dates: Vec<NaiveDate>,
        rv_sqrt: Vec<f64>,
    ) -> Result<Self> {
        let instrument = instrument.into();
        check_dates(&instrument, &dates, rv_sqrt.len())?;
        if let Some(v) = rv_sqrt.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Data(format!(
                "{instrument}: negative or NaN realized volatility {v}"
            )));
        }
        Ok(Self {
            instrument,
            dates,
            rv_sqrt,
        })
    }
}

macro_rules! impl_dated {
    ($ty:ty, $field:ident) => {
        impl DatedSeries for $ty {
            fn instrument(&self) -> &str {
                &self.instrument
            }
            fn dates(&self) -> &[NaiveDate] {
                &self.dates
            }
            fn values(&self) -> &[f64] {
                &self.$field
            }
            fn filter_dates(&self, keep: impl Fn(NaiveDate) -> bool) -> Self {
                let (dates, $field) = self
                    .dates
                    .iter()
                    .zip(&self.$field)
                    .filter(|(d, _)| keep(**d))
                    .map(|(d, v)| (*d, *v))
                    .unzip();
                Self {
                    instrument: self.instrument.clone(),
                    dates,
                    $field,
                }
            }
        }
    };
}

impl_dated!(ReturnSeries, returns);
impl_dated!(RealizedVolSeries, rv_sqrt);

/// Sub-sample boundary. The first sub-sample holds dates `<= pre_end`, the
/// second dates `>= post_start`; anything strictly between is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundary {
    pub pre_end: NaiveDate,
    pub post_start: NaiveDate,
}

impl SplitBoundary {
    /// Contiguous split: everything after `date` goes to the second sub-sample.
    pub fn at(date: NaiveDate) -> Self {
        Self {
            pre_end: date,
            post_start: date + Days::new(1),
        }
    }

    pub fn with_gap(pre_end: NaiveDate, post_start: NaiveDate) -> Result<Self> {
        if post_start <= pre_end {
            return Err(Error::InvalidInput(format!(
                "split start {post_start} must be after split end {pre_end}"
            )));
        }
        Ok(Self {
            pre_end,
            post_start,
        })
    }

    /// Parses `YYYY-MM-DD:YYYY-MM-DD` (pre end, post start) or a single date.
    pub fn parse(s: &str) -> Result<Self> {
        let date = |t: &str| {
            NaiveDate::parse_from_str(t.trim(), "%Y-%m-%d")
                .map_err(|e| Error::InvalidInput(format!("bad split date `{t}`: {e}")))
        };
        match s.split_once(':') {
            Some((a, b)) => Self::with_gap(date(a)?, date(b)?),
            None => Ok(Self::at(date(s)?)),
        }
    }

    pub fn is_pre(&self, d: NaiveDate) -> bool {
        d <= self.pre_end
    }

    pub fn is_post(&self, d: NaiveDate) -> bool {
        d >= self.post_start
    }
}

/// Outcome of [`split_sample`]; `warning` is set when one side came out empty.
#[derive(Debug, Clone)]
pub struct Split<S> {
    pub pre: S,
    pub post: S,
    pub warning: Option<String>,
}

pub fn split_sample<S: DatedSeries>(series: &S, boundary: SplitBoundary) -> Split<S> {
    let pre = series.filter_dates(|d| boundary.is_pre(d));
    let post = series.filter_dates(|d| boundary.is_post(d));
    let warning = if pre.dates().is_empty() || post.dates().is_empty() {
        let msg = format!(
            "{}: split {}..{} leaves an empty sub-sample ({} pre, {} post)",
            series.instrument(),
            boundary.pre_end,
            boundary.post_start,
            pre.dates().len(),
            post.dates().len()
        );
        log::warn!("{msg}");
        Some(msg)
    } else {
        None
    };
    Split { pre, post, warning }
}

/// Writes `instrument,date,value` rows for any number of series.
pub fn write_daily_csv<'a, S: DatedSeries + 'a>(
    path: &Path,
    series: impl IntoIterator<Item = &'a S>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| wrap_csv(path, e))?;
    w.write_record(["instrument", "date", "value"])?;
    for s in series {
        for (d, v) in s.dates().iter().zip(s.values()) {
            w.write_record([s.instrument(), &d.to_string(), &sig10(*v)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn wrap_csv(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(io) = e.kind() {
        if io.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingFile(path.to_path_buf());
        }
    }
    Error::Data(format!("{}: {e}", path.display()))
}

/// Per-instrument `(dates, values)`, ordered by instrument name.
pub type DailyColumns = BTreeMap<String, (Vec<NaiveDate>, Vec<f64>)>;

/// Reads an `instrument,date,value` file.
pub fn read_daily_csv(path: &Path) -> Result<DailyColumns> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| wrap_csv(path, e))?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["instrument", "date", "value"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: "expected header `instrument,date,value`".into(),
        });
    }
    let mut out: BTreeMap<String, (Vec<NaiveDate>, Vec<f64>)> = BTreeMap::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 2;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", rec.len())));
        }
        let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date `{}`: {e}", &rec[1])))?;
        let value: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad value `{}`", &rec[2])))?;
        let entry = out.entry(rec[0].to_string()).or_default();
        entry.0.push(date);
        entry.1.push(value);
    }
    for (inst, (dates, _)) in &out {
        check_dates(inst, dates, dates.len())?;
    }
    Ok(out)
}

pub fn read_returns(path: &Path) -> Result<Vec<ReturnSeries>> {
    read_daily_csv(path)?
        .into_iter()
        .map(|(inst, (d, v))| ReturnSeries::new(inst, d, v))
        .collect()
}

pub fn read_realized_vol(path: &Path) -> Result<Vec<RealizedVolSeries>> {
    read_daily_csv(path)?
        .into_iter()
        .map(|(inst, (d, v))| RealizedVolSeries::new(inst, d, v))
        .collect()
}
