//! Conservative interval for the amplification ratio
//! `b_{A~X} / (Var(A)(1 - R^2_{A~X}))` of a fitted exposure model.
//!
//! The numerator gets a Wald interval (t reference), the denominator a
//! chi-square interval for the residual variance. Each is built at level
//! `1 - (1 - level)/2` so that, by Bonferroni, both hold jointly with
//! probability at least `level`; the ratio interval is the range of
//! numerator/denominator over that rectangle.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distrib::{chisq_quantile, t_quantile, TailProbability};
use crate::error::{Error, Result};
use crate::regress::{fit_ols, OlsFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioInterval {
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
    /// Joint confidence level of the ratio interval.
    pub level: f64,
    /// Level at which each component interval was built.
    pub component_level: f64,
    pub beta_interval: (f64, f64),
    pub variance_interval: (f64, f64),
}

impl RatioInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// `coef ± t_{df}(1 - (1 - level)/2) * se`.
pub fn wald_ci(coef: f64, se: f64, df: u64, level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    if !(se > 0.0) {
        return Err(Error::domain(format!("standard error must be positive, got {se}")));
    }
    let crit = t_quantile(TailProbability::new(1.0 - (1.0 - level) / 2.0)?, df)?;
    Ok((coef - crit * se, coef + crit * se))
}

/// Chi-square interval `(df s² / χ²_{upper}, df s² / χ²_{lower})` for a
/// residual variance `s²` on `df` degrees of freedom.
pub fn variance_ci(residual_variance: f64, df: u64, level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    if !(residual_variance > 0.0) {
        return Err(Error::domain(format!(
            "residual variance must be positive, got {residual_variance}"
        )));
    }
    let tail = (1.0 - level) / 2.0;
    let hi_q = chisq_quantile(TailProbability::new(1.0 - tail)?, df)?;
    let lo_q = chisq_quantile(TailProbability::new(tail)?, df)?;
    let scaled = df as f64 * residual_variance;
    Ok((scaled / hi_q, scaled / lo_q))
}

/// Range of `b / v` over `b` in `beta` and `v` in `variance` (all positive).
pub fn ratio_range(beta: (f64, f64), variance: (f64, f64)) -> (f64, f64) {
    let corners = [
        beta.0 / variance.0,
        beta.0 / variance.1,
        beta.1 / variance.0,
        beta.1 / variance.1,
    ];
    let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn exposure_fit(data: &Dataset, exposure: &str, proxy: &str, controls: &[String]) -> Result<OlsFit> {
    let mut regressors = vec![proxy.to_string()];
    regressors.extend(controls.iter().cloned());
    fit_ols(data, exposure, &regressors, true)
}

/// Ratio interval from an already fitted exposure model.
pub fn ratio_interval_from_fit(fit: &OlsFit, proxy: &str, level: f64) -> Result<RatioInterval> {
    check_level(level)?;
    let component_level = 1.0 - (1.0 - level) / 2.0;
    let j = fit.index_of(proxy)?;
    let df = fit.df_residual as u64;
    let beta_interval = wald_ci(fit.coefficients[j], fit.standard_errors[j], df, component_level)?;
    let variance_interval = variance_ci(fit.residual_variance, df, component_level)?;
    let (lower, upper) = ratio_range(beta_interval, variance_interval);
    Ok(RatioInterval {
        lower,
        upper,
        estimate: fit.coefficients[j] / fit.residual_variance,
        level,
        component_level,
        beta_interval,
        variance_interval,
    })
}

/// Fits `exposure ~ proxy + controls` and returns the conservative ratio
/// interval for the proxy.
pub fn conservative_ratio_ci(
    data: &Dataset,
    exposure: &str,
    proxy: &str,
    controls: &[String],
    level: f64,
) -> Result<RatioInterval> {
    let fit = exposure_fit(data, exposure, proxy, controls)?;
    ratio_interval_from_fit(&fit, proxy, level)
}

/// Proxy coefficient over residual variance of `exposure ~ proxy + controls`.
pub fn ratio_point_estimate(data: &Dataset, exposure: &str, proxy: &str, controls: &[String]) -> Result<f64> {
    let fit = exposure_fit(data, exposure, proxy, controls)?;
    Ok(fit.coefficient(proxy)? / fit.residual_variance)
}
