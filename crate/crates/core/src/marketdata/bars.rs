use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig10;
use crate::marketdata::calendar::TradingCalendar;
use crate::marketdata::series::{wrap_csv, RealizedVolSeries, ReturnSeries};
use crate::marketdata::ticks::TickRecord;

/// Last-tick log-prices on a regular intraday grid for one instrument-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarSeries {
    pub instrument: String,
    pub session_date: NaiveDate,
    pub bar_times: Vec<NaiveTime>,
    pub log_prices: Vec<f64>,
}

impl BarSeries {
    /// Consecutive log-price differences on the grid.
    pub fn intraday_returns(&self) -> Vec<f64> {
        self.log_prices.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Bookkeeping produced while building bars.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    /// Ticks with a non-positive price.
    pub rejected_ticks: usize,
    /// Ticks falling outside the regular session on a trading day.
    pub outside_session_ticks: usize,
    /// Instrument-days skipped because the date is a weekend or listed holiday.
    pub excluded_days: usize,
    /// Trading days that had ticks but none inside the session.
    pub empty_sessions: Vec<(String, NaiveDate)>,
}

impl IngestReport {
    fn merge(mut self, other: IngestReport) -> Self {
        self.rejected_ticks += other.rejected_ticks;
        self.outside_session_ticks += other.outside_session_ticks;
        self.excluded_days += other.excluded_days;
        self.empty_sessions.extend(other.empty_sessions);
        self
    }
}

#[derive(Debug, Clone)]
pub struct BarBuild {
    /// Sorted by instrument, then date.
    pub bars: Vec<BarSeries>,
    pub report: IngestReport,
}

/// Samples last-tick prices on a grid starting at the session open with spacing
/// `interval`. A grid point takes the last trade at or before its time. Grid
/// points before the first trade of the session are absent, and so are grid
/// points after the one that closes the last trade's interval.
pub fn build_bars(
    ticks: &[TickRecord],
    calendar: &TradingCalendar,
    interval: Duration,
) -> Result<BarBuild> {
    let session = calendar.session_length();
    if interval <= Duration::zero() {
        return Err(Error::InvalidInput("bar interval must be positive".into()));
    }
    let step = interval.num_microseconds().unwrap_or(0);
    let span = session.num_microseconds().unwrap_or(0);
    if step == 0 || span % step != 0 {
        return Err(Error::InvalidInput(format!(
            "interval of {}s does not divide the {}s session",
            interval.num_seconds(),
            session.num_seconds()
        )));
    }
    let grid: Vec<NaiveTime> = (0..=span / step)
        .map(|k| calendar.session_open + Duration::microseconds(k * step))
        .collect();

    let mut by_instrument: BTreeMap<&str, Vec<&TickRecord>> = BTreeMap::new();
    for t in ticks {
        by_instrument
            .entry(t.instrument.as_str())
            .or_default()
            .push(t);
    }

    let per_instrument: Vec<(Vec<BarSeries>, IngestReport)> = by_instrument
        .into_par_iter()
        .map(|(inst, ticks)| bars_for_instrument(inst, ticks, calendar, &grid))
        .collect();

    let mut bars = Vec::new();
    let mut report = IngestReport::default();
    for (b, r) in per_instrument {
        bars.extend(b);
        report = report.merge(r);
    }
    for (inst, date) in &report.empty_sessions {
        log::warn!("{inst} {date}: no ticks inside the trading session, day dropped");
    }
    Ok(BarBuild { bars, report })
}

fn bars_for_instrument(
    instrument: &str,
    mut ticks: Vec<&TickRecord>,
    calendar: &TradingCalendar,
    grid: &[NaiveTime],
) -> (Vec<BarSeries>, IngestReport) {
    let mut report = IngestReport::default();
    ticks.sort_by_key(|t| t.timestamp);

    // (local date) -> in-session (time, price), in time order
    let mut days: BTreeMap<NaiveDate, Vec<(NaiveTime, f64)>> = BTreeMap::new();
    let mut excluded: BTreeMap<NaiveDate, ()> = BTreeMap::new();
    for t in ticks {
        if !(t.price > 0.0) {
            report.rejected_ticks += 1;
            continue;
        }
        let local = t
            .timestamp
            .with_timezone(&calendar.utc_offset)
            .naive_local();
        let (date, time) = (local.date(), local.time());
        if !calendar.is_trading_day(date) {
            excluded.insert(date, ());
            continue;
        }
        let day = days.entry(date).or_default();
        if time < calendar.session_open || time > calendar.session_close {
            report.outside_session_ticks += 1;
            continue;
        }
        day.push((time, t.price));
    }
    report.excluded_days = excluded.len();

    let mut bars = Vec::with_capacity(days.len());
    for (date, day) in days {
        if day.is_empty() {
            report.empty_sessions.push((instrument.to_string(), date));
            continue;
        }
        let last_trade = day.last().map(|(t, _)| *t).unwrap();
        let mut bar_times = Vec::new();
        let mut log_prices = Vec::new();
        let mut next = 0;
        let mut last_price: Option<f64> = None;
        for &g in grid {
            while next < day.len() && day[next].0 <= g {
                last_price = Some(day[next].1);
                next += 1;
            }
            if let Some(p) = last_price {
                bar_times.push(g);
                log_prices.push(p.ln());
            }
            if g >= last_trade {
                break;
            }
        }
        bars.push(BarSeries {
            instrument: instrument.to_string(),
            session_date: date,
            bar_times,
            log_prices,
        });
    }
    (bars, report)
}

/// Per-instrument daily series derived from bars, plus the instrument-days that
/// had too few grid points to contribute.
#[derive(Debug, Clone)]
pub struct Derived<S> {
    pub series: Vec<S>,
    pub dropped_days: Vec<(String, NaiveDate)>,
}

fn derive<S>(
    bars: &[BarSeries],
    daily: impl Fn(&BarSeries) -> f64,
    make: impl Fn(String, Vec<NaiveDate>, Vec<f64>) -> Result<S>,
) -> Result<Derived<S>> {
    let mut grouped: BTreeMap<&str, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut dropped_days = Vec::new();
    for b in bars {
        if b.log_prices.len() < 2 {
            dropped_days.push((b.instrument.clone(), b.session_date));
            continue;
        }
        if grouped
            .entry(b.instrument.as_str())
            .or_default()
            .insert(b.session_date, daily(b))
            .is_some()
        {
            return Err(Error::Data(format!(
                "{} {}: duplicate bar series for one session",
                b.instrument, b.session_date
            )));
        }
    }
    let series = grouped
        .into_iter()
        .map(|(inst, days)| {
            let (dates, values) = days.into_iter().unzip();
            make(inst.to_string(), dates, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Derived {
        series,
        dropped_days,
    })
}

/// Within-session open-close log-return: last grid log-price minus the first.
pub fn open_close_returns(bars: &[BarSeries]) -> Result<Derived<ReturnSeries>> {
    derive(
        bars,
        |b| b.log_prices[b.log_prices.len() - 1] - b.log_prices[0],
        ReturnSeries::new,
    )
}

/// Square root of the sum of squared grid-to-grid log-returns per day.
pub fn realized_volatility(bars: &[BarSeries]) -> Result<Derived<RealizedVolSeries>> {
    derive(
        bars,
        |b| {
            b.log_prices
                .windows(2)
                .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
                .sum::<f64>()
                .sqrt()
        },
        RealizedVolSeries::new,
    )
}

/// Long format: `instrument,date,time,value` with one row per grid point.
pub fn write_bars_csv(path: &Path, bars: &[BarSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| wrap_csv(path, e))?;
    w.write_record(["instrument", "date", "time", "value"])?;
    for b in bars {
        let date = b.session_date.to_string();
        for (t, p) in b.bar_times.iter().zip(&b.log_prices) {
            w.write_record([
                b.instrument.as_str(),
                &date,
                &t.format("%H:%M:%S").to_string(),
                &sig10(*p),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, FixedOffset};

    fn cal() -> TradingCalendar {
        TradingCalendar::new(
            NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            NaiveTime::from_hms_opt(16, 0, 0).unwrap(),
            FixedOffset::west_opt(5 * 3600).unwrap(),
        )
        .unwrap()
    }

    fn tick(ts: &str, price: f64) -> TickRecord {
        TickRecord::new("CL", DateTime::parse_from_rfc3339(ts).unwrap(), price)
    }

    fn hm(h: u32, m: u32) -> NaiveTime {
        NaiveTime::from_hms_opt(h, m, 0).unwrap()
    }

    #[test]
    fn last_tick_sampling() {
        let ticks = vec![
            tick("2015-01-05T09:31:00-05:00", 100.0),
            tick("2015-01-05T09:34:00-05:00", 101.0),
            tick("2015-01-05T09:36:00-05:00", 99.0),
        ];
        let out = build_bars(&ticks, &cal(), Duration::minutes(5)).unwrap();
        assert_eq!(out.bars.len(), 1);
        let b = &out.bars[0];
        assert_eq!(b.bar_times, vec![hm(9, 35), hm(9, 40)]);
        assert_eq!(b.log_prices, vec![101f64.ln(), 99f64.ln()]);
    }

    #[test]
    fn boundary_tick_belongs_to_grid_point() {
        let ticks = vec![
            tick("2015-01-05T09:35:00-05:00", 50.0),
            tick("2015-01-05T09:40:00-05:00", 51.0),
        ];
        let b = &build_bars(&ticks, &cal(), Duration::minutes(5))
            .unwrap()
            .bars[0];
        assert_eq!(b.bar_times, vec![hm(9, 35), hm(9, 40)]);
        assert_eq!(b.log_prices, vec![50f64.ln(), 51f64.ln()]);
    }

    #[test]
    fn single_tick_day_has_one_point_and_is_dropped_downstream() {
        let ticks = vec![tick("2015-01-05T11:02:00-05:00", 50.0)];
        let out = build_bars(&ticks, &cal(), Duration::minutes(5)).unwrap();
        assert_eq!(out.bars[0].bar_times, vec![hm(11, 5)]);
        assert!(out.bars[0].intraday_returns().is_empty());
        let rv = realized_volatility(&out.bars).unwrap();
        assert!(rv.series.is_empty());
        assert_eq!(rv.dropped_days.len(), 1);
        let r = open_close_returns(&out.bars).unwrap();
        assert_eq!(r.dropped_days.len(), 1);
    }

    #[test]
    fn holidays_weekends_and_bad_prices_filtered() {
        let c = cal().with_excluded([NaiveDate::from_ymd_opt(2015, 12, 25).unwrap()]);
        let ticks = vec![
            tick("2015-12-25T10:00:00-05:00", 30.0),
            tick("2015-12-26T10:00:00-05:00", 30.0),
            tick("2015-12-28T10:00:00-05:00", -1.0),
            tick("2015-12-28T10:00:00-05:00", 30.0),
            tick("2015-12-28T10:07:00-05:00", 31.0),
            tick("2015-12-28T17:00:00-05:00", 31.0),
        ];
        let out = build_bars(&ticks, &c, Duration::minutes(5)).unwrap();
        assert_eq!(out.bars.len(), 1);
        assert_eq!(
            out.bars[0].session_date,
            NaiveDate::from_ymd_opt(2015, 12, 28).unwrap()
        );
        assert_eq!(out.report.rejected_ticks, 1);
        assert_eq!(out.report.excluded_days, 2);
        assert_eq!(out.report.outside_session_ticks, 1);
    }

    #[test]
    fn session_without_ticks_is_reported() {
        let ticks = vec![tick("2015-12-28T08:00:00-05:00", 30.0)];
        let out = build_bars(&ticks, &cal(), Duration::minutes(5)).unwrap();
        assert!(out.bars.is_empty());
        assert_eq!(out.report.empty_sessions.len(), 1);
    }

    #[test]
    fn timestamps_are_converted_to_calendar_offset() {
        // 14:31 UTC is 09:31 at UTC-5
        let ticks = vec![
            tick("2015-01-05T14:31:00+00:00", 10.0),
            tick("2015-01-05T14:41:00+00:00", 11.0),
        ];
        let b = &build_bars(&ticks, &cal(), Duration::minutes(5))
            .unwrap()
            .bars[0];
        assert_eq!(b.bar_times.first(), Some(&hm(9, 35)));
        assert_eq!(b.bar_times.last(), Some(&hm(9, 45)));
    }

    #[test]
    fn interval_must_divide_session() {
        assert!(build_bars(&[], &cal(), Duration::minutes(7)).is_err());
    }

    fn day(prices: &[f64]) -> BarSeries {
        BarSeries {
            instrument: "CN".into(),
            session_date: NaiveDate::from_ymd_opt(2015, 1, 5).unwrap(),
            bar_times: (0..prices.len())
                .map(|k| hm(9, 30) + Duration::minutes(5 * k as i64))
                .collect(),
            log_prices: prices.to_vec(),
        }
    }

    #[test]
    fn open_close_and_rv_examples() {
        let b = day(&[4.60, 4.62, 4.65]);
        let r = open_close_returns(&[b]).unwrap();
        assert!((r.series[0].returns[0] - 0.05).abs() < 1e-12);

        let b = day(&[1.0, 1.003, 0.999]);
        let rv = realized_volatility(&[b]).unwrap();
        assert!((rv.series[0].rv_sqrt[0] - 0.005).abs() < 1e-12);

        let flat = day(&[2.0; 10]);
        assert_eq!(
            open_close_returns(std::slice::from_ref(&flat))
                .unwrap()
                .series[0]
                .returns[0],
            0.0
        );
        let rv = realized_volatility(&[flat]).unwrap();
        assert_eq!(rv.series[0].rv_sqrt[0], 0.0);
        assert_eq!(rv.series[0].zero_days().len(), 1);
    }
}
