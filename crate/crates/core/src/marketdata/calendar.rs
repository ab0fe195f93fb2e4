use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, FixedOffset, NaiveDate, NaiveTime, Weekday};

use crate::error::{Error, Result};

const DEFAULT_CALENDAR: &str = include_str!("../../data/us_futures_calendar.txt");

/// Trading days, regular session window and holiday exclusions for one market.
///
/// Session times are wall-clock times at `utc_offset`; tick timestamps are
/// converted to that offset before the session date is assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    pub included_weekdays: BTreeSet<u8>,
    pub excluded_dates: BTreeSet<NaiveDate>,
    pub session_open: NaiveTime,
    pub session_close: NaiveTime,
    pub utc_offset: FixedOffset,
}

impl TradingCalendar {
    pub fn new(
        session_open: NaiveTime,
        session_close: NaiveTime,
        utc_offset: FixedOffset,
    ) -> Result<Self> {
        if session_open >= session_close {
            return Err(Error::InvalidInput(format!(
                "session_open {session_open} must precede session_close {session_close}"
            )));
        }
        Ok(Self {
            included_weekdays: (0..5).collect(),
            excluded_dates: BTreeSet::new(),
            session_open,
            session_close,
            utc_offset,
        })
    }

    /// The bundled US futures calendar (09:30-16:00 at UTC-5, 2007-2015 holidays).
    pub fn us_futures_default() -> Self {
        Self::parse(DEFAULT_CALENDAR).expect("bundled calendar is valid")
    }

    pub fn with_excluded(mut self, dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        self.excluded_dates.extend(dates);
        self
    }

    pub fn with_weekdays(mut self, days: impl IntoIterator<Item = Weekday>) -> Self {
        self.included_weekdays = days
            .into_iter()
            .map(|d| d.num_days_from_monday() as u8)
            .collect();
        self
    }

    pub fn is_trading_day(&self, date: NaiveDate) -> bool {
        self.included_weekdays
            .contains(&(date.weekday().num_days_from_monday() as u8))
            && !self.excluded_dates.contains(&date)
    }

    pub fn session_length(&self) -> chrono::Duration {
        self.session_close - self.session_open
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { row, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                row,
                message,
            },
            other => other,
        })
    }

    /// Parses the key-value calendar format:
    ///
    /// ```text
    /// session_open = 09:30
    /// session_close = 16:00
    /// utc_offset = -05:00
    /// weekdays = Mon,Tue,Wed,Thu,Fri
    ///
    /// [excluded]
    /// 2015-12-25
    /// ```
    ///
    /// `#` starts a comment. Missing keys fall back to 09:30, 16:00, +00:00, Mon-Fri.
    pub fn parse(text: &str) -> Result<Self> {
        let mut open = NaiveTime::from_hms_opt(9, 30, 0).unwrap();
        let mut close = NaiveTime::from_hms_opt(16, 0, 0).unwrap();
        let mut offset = FixedOffset::east_opt(0).unwrap();
        let mut weekdays: Option<Vec<Weekday>> = None;
        let mut excluded = BTreeSet::new();
        let mut in_excluded = false;

        for (idx, raw) in text.lines().enumerate() {
            let row = idx + 1;
            let err = |message: String| Error::Parse {
                path: "<calendar>".into(),
                row,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                match line {
                    "[excluded]" => in_excluded = true,
                    other => return Err(err(format!("unknown section {other}"))),
                }
                continue;
            }
            if in_excluded {
                let date = NaiveDate::parse_from_str(line, "%Y-%m-%d")
                    .map_err(|e| err(format!("bad excluded date `{line}`: {e}")))?;
                excluded.insert(date);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let value = value.trim();
            match key.trim() {
                "session_open" => open = parse_clock(value).map_err(err)?,
                "session_close" => close = parse_clock(value).map_err(err)?,
                "utc_offset" => offset = parse_offset(value).map_err(err)?,
                "weekdays" => {
                    let days = value
                        .split(',')
                        .map(|d| {
                            d.trim()
                                .parse::<Weekday>()
                                .map_err(|_| err(format!("bad weekday `{}`", d.trim())))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    weekdays = Some(days);
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }

        let mut cal = Self::new(open, close, offset)?.with_excluded(excluded);
        if let Some(days) = weekdays {
            cal = cal.with_weekdays(days);
        }
        Ok(cal)
    }
}

fn parse_clock(s: &str) -> std::result::Result<NaiveTime, String> {
    NaiveTime::parse_from_str(s, "%H:%M")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S"))
        .map_err(|e| format!("bad clock time `{s}`: {e}"))
}

fn parse_offset(s: &str) -> std::result::Result<FixedOffset, String> {
    let bad = || format!("bad utc offset `{s}`, expected +HH:MM");
    let (sign, rest) = match s.as_bytes().first() {
        Some(b'+') => (1, &s[1..]),
        Some(b'-') => (-1, &s[1..]),
        _ => return Err(bad()),
    };
    let (h, m) = rest.split_once(':').ok_or_else(bad)?;
    let h: i32 = h.parse().map_err(|_| bad())?;
    let m: i32 = m.parse().map_err(|_| bad())?;
    FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_calendar_excludes_holidays() {
        let cal = TradingCalendar::us_futures_default();
        let christmas = NaiveDate::from_ymd_opt(2014, 12, 25).unwrap();
        let thanksgiving = NaiveDate::from_ymd_opt(2015, 11, 26).unwrap();
        let july4_observed = NaiveDate::from_ymd_opt(2015, 7, 3).unwrap();
        assert!(!cal.is_trading_day(christmas));
        assert!(!cal.is_trading_day(thanksgiving));
        assert!(!cal.is_trading_day(july4_observed));
        assert!(cal.is_trading_day(NaiveDate::from_ymd_opt(2015, 7, 6).unwrap()));
        // Saturday
        assert!(!cal.is_trading_day(NaiveDate::from_ymd_opt(2015, 7, 4).unwrap()));
        assert_eq!(cal.utc_offset, FixedOffset::west_opt(5 * 3600).unwrap());
    }

    #[test]
    fn parse_rejects_inverted_session() {
        let err = TradingCalendar::parse("session_open = 16:00\nsession_close = 09:30\n");
        assert!(err.is_err());
    }

    #[test]
    fn parse_reports_row_of_bad_date() {
        let text = "session_open = 09:30\n[excluded]\n2015-02-30\n";
        match TradingCalendar::parse(text) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weekdays_key_restricts_days() {
        let cal = TradingCalendar::parse("weekdays = Mon, Wed\n").unwrap();
        assert!(cal.is_trading_day(NaiveDate::from_ymd_opt(2015, 7, 6).unwrap()));
        assert!(!cal.is_trading_day(NaiveDate::from_ymd_opt(2015, 7, 7).unwrap()));
    }
}
