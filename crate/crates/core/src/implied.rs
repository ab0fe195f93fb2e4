//! CBOE-style implied variance from a single-expiry option chain, index
//! levels, and daily de-annualization of published volatility indexes.

use std::io::BufRead;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig10;
use crate::marketdata::{wrap_csv, DatedSeries};

/// Trading days per year used to de-annualize index levels.
pub const TRADING_DAYS_PER_YEAR: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionSide {
    Put,
    Call,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub strike: f64,
    pub side: OptionSide,
    /// Bid-ask midpoint.
    pub mid: f64,
}

/// One expiry of out-of-the-money quotes around `k0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionChainSnapshot {
    /// Time to expiration in years.
    pub t: f64,
    /// Forward index level.
    pub forward: f64,
    /// First strike below the forward.
    pub k0: f64,
    /// Continuously compounded risk-free rate to expiration.
    pub rate: f64,
    pub quotes: Vec<OptionQuote>,
}

impl OptionChainSnapshot {
    pub fn new(t: f64, forward: f64, k0: f64, rate: f64, quotes: Vec<OptionQuote>) -> Result<Self> {
        let chain = Self {
            t,
            forward,
            k0,
            rate,
            quotes,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.t > 0.0) {
            return bad(format!(
                "time to expiration must be positive, got {}",
                self.t
            ));
        }
        if !(self.forward > 0.0) {
            return bad(format!("forward must be positive, got {}", self.forward));
        }
        if !(self.k0 > 0.0 && self.k0 <= self.forward) {
            return bad(format!(
                "K0 = {} must be in (0, F = {}]",
                self.k0, self.forward
            ));
        }
        if !self.rate.is_finite() {
            return bad("risk-free rate must be finite".into());
        }
        for q in &self.quotes {
            if !(q.strike > 0.0) {
                return bad(format!("strike must be positive, got {}", q.strike));
            }
            if !(q.mid >= 0.0) {
                return bad(format!(
                    "quote at strike {} has negative mid {}",
                    q.strike, q.mid
                ));
            }
            let otm = match q.side {
                OptionSide::Put => q.strike <= self.k0,
                OptionSide::Call => q.strike >= self.k0,
            };
            if !otm {
                return bad(format!(
                    "{:?} at strike {} is in the money relative to K0 = {}",
                    q.side, q.strike, self.k0
                ));
            }
        }
        if let Some(w) = self.quotes.windows(2).find(|w| w[0].strike >= w[1].strike) {
            return bad(format!(
                "strikes not strictly increasing at {} -> {}",
                w[0].strike, w[1].strike
            ));
        }
        Ok(())
    }

    /// Strike intervals: half the distance between the two neighbours, or the
    /// distance to the single neighbour at either end of the chain.
    pub fn strike_intervals(&self) -> Result<Vec<f64>> {
        let k: Vec<f64> = self.quotes.iter().map(|q| q.strike).collect();
        let n = k.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "strike intervals need at least two strikes, chain has {n}"
            )));
        }
        Ok((0..n)
            .map(|i| match i {
                0 => k[1] - k[0],
                i if i == n - 1 => k[n - 1] - k[n - 2],
                i => 0.5 * (k[i + 1] - k[i - 1]),
            })
            .collect())
    }
}

/// Annualized implied variance:
/// `(2/T) sum_i dK_i / K_i^2 * e^{RT} Q(K_i) - (1/T) (F/K0 - 1)^2`.
pub fn cboe_variance(chain: &OptionChainSnapshot) -> Result<f64> {
    chain.validate()?;
    if chain.quotes.is_empty() {
        return Err(Error::InvalidInput("option chain is empty".into()));
    }
    let dk = chain.strike_intervals()?;
    let growth = (chain.rate * chain.t).exp();
    let weighted: f64 = chain
        .quotes
        .iter()
        .zip(&dk)
        .map(|(q, dk)| dk / (q.strike * q.strike) * growth * q.mid)
        .sum();
    let correction = (chain.forward / chain.k0 - 1.0).powi(2) / chain.t;
    let variance = 2.0 / chain.t * weighted - correction;
    if variance < 0.0 {
        return Err(Error::Numerical(format!(
            "degenerate chain: implied variance {variance} is negative"
        )));
    }
    Ok(variance)
}

/// Index level `100 * sqrt(variance)`.
pub fn index_level(variance: f64) -> Result<f64> {
    if !(variance >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "variance must be non-negative, got {variance}"
        )));
    }
    Ok(100.0 * variance.sqrt())
}

/// Percent-annualized index level to daily volatility in log-return units.
pub fn deannualize(index_annual: f64) -> Result<f64> {
    if !(index_annual >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "index level must be non-negative, got {index_annual}"
        )));
    }
    Ok(index_annual / 100.0 / TRADING_DAYS_PER_YEAR.sqrt())
}

/// Reads a chain snapshot: `key=value` lines for `T`, `F`, `K0`, `R`, then a
/// `strike,side,mid` CSV block. Blank lines and `#` comments are ignored.
pub fn read_chain(path: &Path) -> Result<OptionChainSnapshot> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let (mut t, mut f, mut k0, mut r) = (None, None, None, None);
    let mut quotes = Vec::new();
    let mut in_table = false;
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let row = idx + 1;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.split('#').next().unwrap_or("").trim().to_string();
        if line.is_empty() {
            continue;
        }
        if !in_table {
            if line.replace(' ', "") == "strike,side,mid" {
                in_table = true;
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                bad(format!(
                    "expected `key=value` or the `strike,side,mid` header, got `{line}`"
                ))
            })?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad number `{}`", value.trim())))?;
            match key.trim() {
                "T" => t = Some(value),
                "F" => f = Some(value),
                "K0" | "K_0" => k0 = Some(value),
                "R" => r = Some(value),
                other => return Err(bad(format!("unknown header key `{other}`"))),
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", fields.len())));
        }
        let strike: f64 = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad strike `{}`", fields[0])))?;
        let side = match fields[1].to_ascii_lowercase().as_str() {
            "put" | "p" => OptionSide::Put,
            "call" | "c" => OptionSide::Call,
            other => return Err(bad(format!("bad side `{other}`"))),
        };
        let mid: f64 = fields[2]
            .parse()
            .map_err(|_| bad(format!("bad mid `{}`", fields[2])))?;
        quotes.push(OptionQuote { strike, side, mid });
    }
    let missing =
        |k: &str| Error::Data(format!("{}: chain header is missing `{k}`", path.display()));
    OptionChainSnapshot::new(
        t.ok_or_else(|| missing("T"))?,
        f.ok_or_else(|| missing("F"))?,
        k0.ok_or_else(|| missing("K0"))?,
        r.ok_or_else(|| missing("R"))?,
        quotes,
    )
}

/// Published index levels alongside their daily de-annualized values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolIndexSeries {
    pub instrument: String,
    pub dates: Vec<NaiveDate>,
    pub index_annual: Vec<f64>,
    pub vol_daily: Vec<f64>,
}

impl VolIndexSeries {
    pub fn from_levels(
        instrument: impl Into<String>,
        dates: Vec<NaiveDate>,
        index_annual: Vec<f64>,
    ) -> Result<Self> {
        let instrument = instrument.into();
        if dates.len() != index_annual.len() {
            return Err(Error::Data(format!(
                "{instrument}: dates and levels differ in length"
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Data(format!(
                "{instrument}: dates not strictly increasing at {}",
                w[1]
            )));
        }
        let vol_daily = index_annual
            .iter()
            .map(|v| deannualize(*v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            instrument,
            dates,
            index_annual,
            vol_daily,
        })
    }
}

impl DatedSeries for VolIndexSeries {
    fn instrument(&self) -> &str {
        &self.instrument
    }
    fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }
    fn values(&self) -> &[f64] {
        &self.vol_daily
    }
    fn filter_dates(&self, keep: impl Fn(NaiveDate) -> bool) -> Self {
        let rows: Vec<usize> = (0..self.dates.len())
            .filter(|&i| keep(self.dates[i]))
            .collect();
        Self {
            instrument: self.instrument.clone(),
            dates: rows.iter().map(|&i| self.dates[i]).collect(),
            index_annual: rows.iter().map(|&i| self.index_annual[i]).collect(),
            vol_daily: rows.iter().map(|&i| self.vol_daily[i]).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IndexParse {
    pub series: VolIndexSeries,
    /// Rows whose value was `.` or empty.
    pub missing: usize,
    pub warnings: Vec<String>,
}

/// Parses a `DATE,<SERIES>` file as published by FRED.
pub fn parse_index_csv(path: &Path, instrument: &str) -> Result<IndexParse> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| wrap_csv(path, e))?;
    let headers = rdr.headers()?.clone();
    let date_col = headers.get(0).map(|h| h.trim().to_ascii_uppercase());
    if headers.len() != 2 || !matches!(date_col.as_deref(), Some("DATE") | Some("OBSERVATION_DATE"))
    {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: "expected header `DATE,<SERIES>`".into(),
        });
    }
    let mut rows: Vec<(NaiveDate, f64)> = Vec::new();
    let mut missing = 0;
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 2;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 2 {
            return Err(bad(format!("expected 2 fields, got {}", rec.len())));
        }
        let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date `{}`: {e}", &rec[0])))?;
        let raw = rec[1].trim();
        if raw.is_empty() || raw == "." {
            missing += 1;
            continue;
        }
        let level: f64 = raw.parse().map_err(|_| bad(format!("bad value `{raw}`")))?;
        if !(level >= 0.0) || !level.is_finite() {
            return Err(bad(format!("index level must be non-negative, got {raw}")));
        }
        rows.push((date, level));
    }

    let mut warnings = Vec::new();
    if rows.windows(2).any(|w| w[0].0 > w[1].0) {
        let msg = format!("{}: dates out of order, rows re-sorted", path.display());
        log::warn!("{msg}");
        warnings.push(msg);
        rows.sort_by_key(|r| r.0);
    }
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Data(format!(
            "{}: duplicate date {}",
            path.display(),
            w[0].0
        )));
    }
    let (dates, levels) = rows.into_iter().unzip();
    Ok(IndexParse {
        series: VolIndexSeries::from_levels(instrument, dates, levels)?,
        missing,
        warnings,
    })
}

/// `instrument,date,index_annual,vol_daily`
pub fn write_index_csv<'a>(
    path: &Path,
    series: impl IntoIterator<Item = &'a VolIndexSeries>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| wrap_csv(path, e))?;
    w.write_record(["instrument", "date", "index_annual", "vol_daily"])?;
    for s in series {
        for i in 0..s.dates.len() {
            w.write_record([
                s.instrument.as_str(),
                &s.dates[i].to_string(),
                &sig10(s.index_annual[i]),
                &sig10(s.vol_daily[i]),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads files written by [`write_index_csv`]. Daily values are recomputed
/// from the annual levels, so the scaling identity holds exactly.
pub fn read_index_csv(path: &Path) -> Result<Vec<VolIndexSeries>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| wrap_csv(path, e))?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["instrument", "date", "index_annual", "vol_daily"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: "expected header `instrument,date,index_annual,vol_daily`".into(),
        });
    }
    let mut by_inst: std::collections::BTreeMap<String, (Vec<NaiveDate>, Vec<f64>)> =
        Default::default();
    for (idx, rec) in rdr.records().enumerate() {
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            row: idx + 2,
            message,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date `{}`: {e}", &rec[1])))?;
        let level: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad level `{}`", &rec[2])))?;
        let e = by_inst.entry(rec[0].to_string()).or_default();
        e.0.push(date);
        e.1.push(level);
    }
    by_inst
        .into_iter()
        .map(|(inst, (d, v))| VolIndexSeries::from_levels(inst, d, v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn q(strike: f64, side: OptionSide, mid: f64) -> OptionQuote {
        OptionQuote { strike, side, mid }
    }

    fn example_chain() -> OptionChainSnapshot {
        OptionChainSnapshot::new(
            30.0 / 365.0,
            100.0,
            100.0,
            0.0,
            vec![
                q(95.0, OptionSide::Put, 1.0),
                q(100.0, OptionSide::Put, 2.0),
                q(105.0, OptionSide::Call, 1.0),
            ],
        )
        .unwrap()
    }

    /// Independent hand evaluation of each term of the variance formula.
    fn hand_variance() -> f64 {
        let two_over_t = 2.0 / (30.0 / 365.0);
        two_over_t * (5.0 / 9025.0 * 1.0 + 5.0 / 10000.0 * 2.0 + 5.0 / 11025.0 * 1.0)
    }

    #[test]
    fn chain_example() {
        let v = cboe_variance(&example_chain()).unwrap();
        assert!((v - hand_variance()).abs() < 1e-15);
        assert!((v - 0.04885).abs() < 1e-5, "{v}");
        let idx = index_level(v).unwrap();
        assert!((idx - 22.10).abs() < 5e-3, "{idx}");
    }

    #[test]
    fn strike_interval_edges() {
        let mut c = example_chain();
        c.quotes[2].strike = 110.0;
        assert_eq!(c.strike_intervals().unwrap(), vec![5.0, 7.5, 10.0]);
    }

    #[test]
    fn doubling_quotes_doubles_variance_when_forward_is_at_k0() {
        let base = cboe_variance(&example_chain()).unwrap();
        let mut c = example_chain();
        for quote in &mut c.quotes {
            quote.mid *= 2.0;
        }
        let doubled = cboe_variance(&c).unwrap();
        assert!(doubled > base);
        assert!((doubled - 2.0 * base).abs() < 1e-15);
    }

    #[test]
    fn forward_above_k0_subtracts_correction() {
        let mut c = example_chain();
        c.forward = 101.0;
        let v = cboe_variance(&c).unwrap();
        let expected = hand_variance() - (101.0f64 / 100.0 - 1.0).powi(2) / c.t;
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_in_the_money_and_empty_chains() {
        let mut c = example_chain();
        c.quotes[0].side = OptionSide::Call;
        assert!(cboe_variance(&c).is_err());
        let mut c = example_chain();
        c.quotes.clear();
        assert!(cboe_variance(&c).is_err());
    }

    #[test]
    fn negative_variance_is_an_error() {
        let mut c = example_chain();
        for quote in &mut c.quotes {
            quote.mid = 0.0;
        }
        c.forward = 110.0;
        assert!(matches!(cboe_variance(&c), Err(Error::Numerical(_))));
    }

    #[test]
    fn index_and_deannualize_examples() {
        assert_eq!(index_level(0.04).unwrap(), 20.0);
        assert_eq!(index_level(0.0).unwrap(), 0.0);
        assert!(index_level(-1e-9).is_err());
        assert!((deannualize(32.5).unwrap() - 0.0205548).abs() < 1e-6);
        assert_eq!(deannualize(0.0).unwrap(), 0.0);
        assert!(deannualize(-1.0).is_err());
    }

    #[test]
    fn composition_identity() {
        for v in [0.0, 1e-6, 0.01, 0.0488, 0.3, 2.5] {
            let lhs = deannualize(index_level(v).unwrap()).unwrap();
            let rhs = v.sqrt() / 250f64.sqrt();
            assert!((lhs - rhs).abs() <= 1e-15 * (1.0 + rhs));
        }
    }

    #[test]
    fn parses_fred_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "DATE,OVXCLS").unwrap();
        writeln!(f, "2011-03-18,30.00").unwrap();
        writeln!(f, "2011-03-16,32.50").unwrap();
        writeln!(f, "2011-03-17,.").unwrap();
        writeln!(f, "2011-03-21,").unwrap();
        let p = parse_index_csv(f.path(), "CL").unwrap();
        assert_eq!(p.missing, 2);
        assert_eq!(p.warnings.len(), 1);
        let s = p.series;
        assert_eq!(s.dates[0], NaiveDate::from_ymd_opt(2011, 3, 16).unwrap());
        assert!((s.vol_daily[0] - 0.0205548).abs() < 1e-6);
        for (v, idx) in s.vol_daily.iter().zip(&s.index_annual) {
            assert!((v * 100.0 * 250f64.sqrt() - idx).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_number_reports_row() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "DATE,GVZCLS").unwrap();
        writeln!(f, "2011-03-16,20").unwrap();
        writeln!(f, "2011-03-17,abc").unwrap();
        match parse_index_csv(f.path(), "GC") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reads_chain_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "T=0.0821917808219178\nF=100\nK0=100\nR=0\nstrike,side,mid"
        )
        .unwrap();
        writeln!(f, "95,put,1\n100,put,2\n105,call,1").unwrap();
        let chain = read_chain(f.path()).unwrap();
        assert_eq!(chain.quotes.len(), 3);
        assert!((cboe_variance(&chain).unwrap() - hand_variance()).abs() < 1e-12);
    }
}
