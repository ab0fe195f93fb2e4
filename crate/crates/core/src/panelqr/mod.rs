//! Fixed-effects panel quantile regression.
//!
//! Fixed effects enter as asset-specific intercepts in a dummy-variable
//! design; nothing is penalized and regressors are used in raw units.

mod dataset;
mod fit;
mod loss;
pub mod solver;

pub use dataset::{build_panel, BalancePolicy, PanelBuild, PanelDataset, RegressorColumn};
pub use fit::{
    alpha_name, crossing_diagnostic, fit_each_asset, fit_panel_qr, fit_panel_qr_with,
    fit_quantile_curve, fit_univariate_qr, rearrange_quantiles, validate_tau_grid, Crossing,
    FitOptions, QuantileCurve, QuantileFit, QuantileSpec, TABLE_TAUS,
};
pub use loss::{check_loss, objective};
pub use solver::{LinearProblem, SolverReport, SolverStatus};
