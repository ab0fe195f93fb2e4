use crate::error::{Error, Result};
use crate::panelqr::dataset::PanelDataset;

/// Check (pinball) loss `u * (tau - 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> f64 {
    super::solver::rho(u, tau)
}

/// Total check loss of `(alpha, beta)` over every panel cell.
pub fn objective(data: &PanelDataset, tau: f64, alpha: &[f64], beta: &[f64]) -> Result<f64> {
    if alpha.len() != data.n_assets() || beta.len() != data.n_regressors() {
        return Err(Error::InvalidInput(format!(
            "expected {} fixed effects and {} slopes, got {} and {}",
            data.n_assets(),
            data.n_regressors(),
            alpha.len(),
            beta.len()
        )));
    }
    let mut total = 0.0;
    for (a, alpha_a) in alpha.iter().enumerate() {
        for t in 0..data.n_dates() {
            let fitted = alpha_a
                + data
                    .x_row(a, t)
                    .iter()
                    .zip(beta)
                    .map(|(x, b)| x * b)
                    .sum::<f64>();
            total += check_loss(data.y(a, t) - fitted, tau);
        }
    }
    Ok(total)
}
