//! Out-of-sample VaR: fit on the first half of a simulated panel, forecast the
//! second half, and compare violation rates with a Gaussian benchmark.

use volquant::marketdata::ReturnSeries;
use volquant::panelqr::fit_panel_qr;
use volquant::synth::{generate_panel, Innovation, SynthSpec};
use volquant::varengine::{forecast_var, parametric_var, violation_rate, ModelTag, VaRForecast};

fn main() -> volquant::Result<()> {
    let s = generate_panel(&SynthSpec::new(
        5,
        4000,
        Innovation::StudentT { nu: 4.0 },
        11,
    ))?;
    let n = s.panel.n_dates();
    let est = s.panel.select_dates(&(0..n / 2).collect::<Vec<_>>())?;
    let eval = s.panel.select_dates(&(n / 2..n).collect::<Vec<_>>())?;
    let mut forecasts = Vec::new();
    for tau in [0.01, 0.05, 0.10] {
        let fit = fit_panel_qr(&est, tau)?;
        for (a, asset) in eval.assets().iter().enumerate() {
            for (t, date) in eval.dates().iter().enumerate() {
                let x = eval.x_row(a, t);
                forecasts.push(forecast_var(&fit, x, asset, *date, ModelTag::Rv)?);
                forecasts.push(VaRForecast {
                    asset: asset.clone(),
                    date: *date,
                    tau,
                    model: ModelTag::Parametric,
                    value: parametric_var(tau, x[0])?,
                });
            }
        }
    }
    let realized = eval
        .assets()
        .iter()
        .enumerate()
        .map(|(a, asset)| {
            let y = (0..eval.n_dates()).map(|t| eval.y(a, t)).collect();
            ReturnSeries::new(asset.clone(), eval.dates().to_vec(), y)
        })
        .collect::<volquant::Result<Vec<_>>>()?;
    println!("model       tau   violations  rate    (se)");
    for row in violation_rate(&forecasts, &realized)? {
        println!(
            "{:<10}  {:<4}  {:>5}/{:<5}  {:.4}  ({:.4})",
            row.model.as_str(),
            row.tau,
            row.violations,
            row.observations,
            row.rate,
            row.binomial_se
        );
    }
    Ok(())
}
