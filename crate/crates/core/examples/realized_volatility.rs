//! Builds 5-minute bars from synthetic ticks and prints daily open-close
//! returns and realized volatility.

use chrono::{Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volquant::marketdata::{
    build_bars, open_close_returns, realized_volatility, TickRecord, TradingCalendar,
};

fn main() -> volquant::Result<()> {
    let calendar = TradingCalendar::us_futures_default();
    let tz = FixedOffset::west_opt(5 * 3600).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ticks = Vec::new();
    let mut price: f64 = 60.0;
    // includes the July 3 holiday and a weekend
    for day in NaiveDate::from_ymd_opt(2015, 6, 29)
        .unwrap()
        .iter_days()
        .take(10)
    {
        let open = tz
            .from_local_datetime(&day.and_time(NaiveTime::from_hms_opt(9, 30, 0).unwrap()))
            .unwrap();
        let mut sec = 0;
        while sec < 23_400 {
            sec += rng.random_range(1..120);
            price *= (0.0008 * rng.random_range(-1.0..1.0f64)).exp();
            ticks.push(TickRecord::new(
                "CL",
                open + Duration::seconds(sec.min(23_400)),
                price,
            ));
        }
    }
    let built = build_bars(&ticks, &calendar, Duration::minutes(5))?;
    println!(
        "{} ticks -> {} sessions, {} days excluded",
        ticks.len(),
        built.bars.len(),
        built.report.excluded_days
    );
    let returns = open_close_returns(&built.bars)?;
    let rv = realized_volatility(&built.bars)?;
    println!("date        return      rv_sqrt");
    for ((d, r), v) in returns.series[0]
        .dates
        .iter()
        .zip(&returns.series[0].returns)
        .zip(&rv.series[0].rv_sqrt)
    {
        println!("{d}  {r:+.6}  {v:.6}");
    }
    Ok(())
}
