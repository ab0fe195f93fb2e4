//! Day-resampling bootstrap: standard errors, t-statistics and percentile
//! bands for the slope across quantiles.

use volquant::inference::{bootstrap_fit, confidence_bands, BootstrapConfig};
use volquant::synth::{generate_panel, Innovation, SynthSpec};

fn main() -> volquant::Result<()> {
    let s = generate_panel(&SynthSpec::new(4, 600, Innovation::Normal, 3))?;
    let cfg = BootstrapConfig {
        replicates: 200,
        seed: 42,
        ..Default::default()
    };
    let reports = [0.05, 0.25, 0.5, 0.75, 0.95]
        .iter()
        .map(|tau| bootstrap_fit(&s.panel, *tau, &cfg))
        .collect::<volquant::Result<Vec<_>>>()?;
    for r in &reports {
        let b = r.parameter("rv_sqrt").unwrap();
        let t = b.t_stat.map_or("NA".to_string(), |t| format!("{t:.2}"));
        println!(
            "tau {:<4}  beta {:+.3}  se {:.3}  t {t:>6}  {:.0}% CI [{:+.3}, {:+.3}]",
            r.tau,
            b.estimate,
            b.se,
            100.0 * r.confidence_level,
            b.ci_low,
            b.ci_high
        );
    }
    let bands = confidence_bands(&reports)?;
    let slope = bands.iter().find(|b| b.parameter == "rv_sqrt").unwrap();
    println!(
        "lower band {:?}",
        slope
            .lower
            .iter()
            .map(|v| (v * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );
    println!(
        "upper band {:?}",
        slope
            .upper
            .iter()
            .map(|v| (v * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );
    Ok(())
}
