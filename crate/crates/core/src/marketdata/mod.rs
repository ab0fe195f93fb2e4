//! Tick ingestion, last-tick bar sampling, open-close returns, realized
//! volatility and descriptive statistics.

mod bars;
mod calendar;
mod series;
mod stats;
mod ticks;

pub use bars::{
    build_bars, open_close_returns, realized_volatility, write_bars_csv, BarBuild, BarSeries,
    Derived, IngestReport,
};
pub use calendar::TradingCalendar;
pub(crate) use series::wrap_csv;
pub use series::{
    read_daily_csv, read_realized_vol, read_returns, split_sample, write_daily_csv, DatedSeries,
    RealizedVolSeries, ReturnSeries, Split, SplitBoundary,
};
pub use stats::{descriptive_stats, StatsSummary};
pub use ticks::{read_ticks, write_ticks, TickRecord};
