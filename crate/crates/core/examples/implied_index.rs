//! Variance-swap style index from a small option chain, then the daily
//! volatility implied by a published index level.

use volquant::implied::{
    cboe_variance, deannualize, index_level, OptionChainSnapshot, OptionQuote, OptionSide,
};

fn main() -> volquant::Result<()> {
    let q = |strike, side, mid| OptionQuote { strike, side, mid };
    let chain = OptionChainSnapshot::new(
        30.0 / 365.0,
        100.0,
        100.0,
        0.0,
        vec![
            q(90.0, OptionSide::Put, 0.4),
            q(95.0, OptionSide::Put, 1.0),
            q(100.0, OptionSide::Put, 2.0),
            q(105.0, OptionSide::Call, 1.0),
            q(110.0, OptionSide::Call, 0.35),
        ],
    )?;
    let variance = cboe_variance(&chain)?;
    let index = index_level(variance)?;
    println!("variance = {variance:.6}");
    println!("index    = {index:.4}");
    println!("daily    = {:.7}", deannualize(index)?);
    for level in [15.0, 32.5, 60.0] {
        println!("published {level:>5} -> daily {:.7}", deannualize(level)?);
    }
    Ok(())
}
