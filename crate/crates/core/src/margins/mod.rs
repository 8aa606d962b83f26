//! Univariate extreme-value machinery: the generalized Pareto law, the
//! semi-parametric mixture margin and its Fréchet transform, and threshold
//! diagnostics.

mod diagnostics;
mod gpd;
mod mixture;

pub use diagnostics::{
    dispersion_index, hill_curve, shape_vs_k, stability_window, stable_windows, threshold_diagnostics, Blocking,
    ShapeEstimates, StabilityWindow, ThresholdDiagnostics, ThresholdGrid, ThresholdRow,
};
pub use gpd::{
    excesses_over, fit_excesses_mle, fit_excesses_moments, fit_gpd, hill_estimator, GpdMethod,
    GpdParams, GAMMA_ZERO_TOL, MIN_EXCEEDANCES, MLE_GAMMA_RANGE,
};
pub use mixture::{fit_marginal_mixture, MarginalMixtureModel, DEFAULT_P_U};

pub fn gpd_cdf(params: &GpdParams, x: f64) -> crate::Result<f64> {
    params.cdf(x)
}

pub fn gpd_quantile(params: &GpdParams, q: f64) -> crate::Result<f64> {
    params.quantile(q)
}
