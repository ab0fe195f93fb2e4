use std::path::Path;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::series::wrap_csv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub instrument: String,
    pub timestamp: DateTime<FixedOffset>,
    pub price: f64,
}

impl TickRecord {
    pub fn new(
        instrument: impl Into<String>,
        timestamp: DateTime<FixedOffset>,
        price: f64,
    ) -> Self {
        Self {
            instrument: instrument.into(),
            timestamp,
            price,
        }
    }
}

/// Reads `instrument,timestamp,price` with RFC 3339 timestamps.
///
/// Malformed rows are hard errors carrying the 1-based file row. Non-positive
/// prices are kept here and rejected (and counted) by bar construction.
pub fn read_ticks(path: &Path) -> Result<Vec<TickRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| wrap_csv(path, e))?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["instrument", "timestamp", "price"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: "expected header `instrument,timestamp,price`".into(),
        });
    }
    let mut ticks = Vec::new();
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
        let timestamp = DateTime::parse_from_rfc3339(rec[1].trim())
            .map_err(|e| bad(format!("bad timestamp `{}`: {e}", &rec[1])))?;
        let price: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad price `{}`", &rec[2])))?;
        if price.is_nan() {
            return Err(bad("price is NaN".into()));
        }
        ticks.push(TickRecord::new(rec[0].trim(), timestamp, price));
    }
    Ok(ticks)
}

pub fn write_ticks(path: &Path, ticks: &[TickRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| wrap_csv(path, e))?;
    w.write_record(["instrument", "timestamp", "price"])?;
    for t in ticks {
        w.write_record([
            t.instrument.as_str(),
            &t.timestamp
                .to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
            &crate::fmt::sig10(t.price),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn malformed_row_reports_row_number() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "instrument,timestamp,price").unwrap();
        writeln!(f, "CL,2015-01-05T09:31:00-05:00,52.1").unwrap();
        writeln!(f, "CL,not-a-time,52.2").unwrap();
        match read_ticks(f.path()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn microsecond_timestamps_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let ts = DateTime::parse_from_rfc3339("2015-01-05T09:31:00.123456-05:00").unwrap();
        let ticks = vec![TickRecord::new("GC", ts, 1200.5)];
        write_ticks(&path, &ticks).unwrap();
        assert_eq!(read_ticks(&path).unwrap(), ticks);
    }
}
