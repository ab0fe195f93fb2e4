//! Semi-parametric Value-at-Risk for commodity panels.
//!
//! Future return quantiles are regressed on ex-post (realized) and ex-ante
//! (option-implied) volatility with a fixed-effects panel quantile regression.
//! The crate covers the data pipeline from raw ticks and published volatility
//! indexes, the exact quantile-regression solver, day-slice bootstrap
//! inference, VaR forecasts and plot-ready report tables.

// `!(x > 0.0)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fmt;
pub mod implied;
pub mod inference;
pub mod marketdata;
pub mod panelqr;
pub mod synth;
pub mod varengine;

pub use error::{Error, Result};
