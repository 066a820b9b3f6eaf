//! Omitted-variable bias when a proxy stands in for a latent confounder.
//!
//! With outcome `Y = a0 + b*A + t*X + g*U + e_Y`, proxy `X = U + e_X` and
//! `Cov(A, e_X) = 0`, the coefficient of `A` in the regression `Y ~ A + X`
//! is off by
//!
//! ```text
//!     g * Var(e_X) * b_{A~X} / (Var(A) * (1 - R^2_{A~X}))
//! ```
//!
//! The last factor is observable from the exposure model alone; it grows
//! when the proxy predicts the exposure strongly while the residual exposure
//! variance stays put. Dropping the covariance restriction subtracts
//! `g * Cov(A, e_X) / (Var(A) * (1 - R^2_{A~X}))` from the bias.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regress::OlsFit;

/// `1 - R^2` below this leaves no usable residual exposure variance.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// Unobservable parts of the structural model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyModel {
    /// Effect of the latent confounder on the outcome.
    pub gamma: f64,
    /// Measurement-noise variance of the proxy.
    pub var_eps_x: f64,
    /// Covariance of the exposure with the proxy noise; zero when the exposure
    /// and the proxy share no common cause besides the latent confounder.
    pub cov_a_eps_x: f64,
}

impl ProxyModel {
    pub fn new(gamma: f64, var_eps_x: f64, cov_a_eps_x: f64) -> Result<Self> {
        if !(var_eps_x >= 0.0) || !gamma.is_finite() || !cov_a_eps_x.is_finite() {
            return Err(Error::domain(format!(
                "proxy model needs finite gamma, cov and Var(eps_X) >= 0 (got {gamma}, {var_eps_x}, {cov_a_eps_x})"
            )));
        }
        Ok(Self { gamma, var_eps_x, cov_a_eps_x })
    }

    /// Proxy noise uncorrelated with the exposure.
    pub fn uncorrelated(gamma: f64, var_eps_x: f64) -> Result<Self> {
        Self::new(gamma, var_eps_x, 0.0)
    }
}

/// Summary of the exposure model `A ~ X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureModelStats {
    pub beta_a_on_x: f64,
    pub var_a: f64,
    pub r2_a_on_x: f64,
}

impl ExposureModelStats {
    pub fn new(beta_a_on_x: f64, var_a: f64, r2_a_on_x: f64) -> Result<Self> {
        if !(var_a > 0.0) || !(0.0..1.0).contains(&r2_a_on_x) || !beta_a_on_x.is_finite() {
            return Err(Error::domain(format!(
                "exposure model needs Var(A) > 0 and R^2 in [0, 1) (got Var(A) = {var_a}, R^2 = {r2_a_on_x})"
            )));
        }
        Ok(Self { beta_a_on_x, var_a, r2_a_on_x })
    }

    /// From second moments of the pair `(A, X)`.
    pub fn from_moments(var_a: f64, var_x: f64, cov_a_x: f64) -> Result<Self> {
        if !(var_x > 0.0) || !(var_a > 0.0) {
            return Err(Error::domain("variances must be positive"));
        }
        let r2 = cov_a_x * cov_a_x / (var_a * var_x);
        if r2 >= 1.0 - DEGENERACY_TOLERANCE {
            return Err(Error::DegenerateExposure { r_squared: r2 });
        }
        Self::new(cov_a_x / var_x, var_a, r2)
    }

    /// From a fitted exposure model `A ~ proxy (+ controls)`.
    ///
    /// `beta_a_on_x` is the proxy's (partial) coefficient. `var_a` is scaled so
    /// that `var_a * (1 - R^2)` is the fit's residual variance, i.e. uses the
    /// `n - p` denominator. With controls this is the same as first
    /// residualizing exposure and proxy on the controls.
    pub fn from_fit(fit: &OlsFit, proxy: &str) -> Result<Self> {
        let r2 = fit.r_squared;
        if 1.0 - r2 < DEGENERACY_TOLERANCE || !(fit.residual_variance > 0.0) {
            return Err(Error::DegenerateExposure { r_squared: r2 });
        }
        Self::new(fit.coefficient(proxy)?, fit.residual_variance / (1.0 - r2), r2)
    }

    /// `Var(A) * (1 - R^2)`: exposure variance not explained by the proxy.
    pub fn residual_variance(&self) -> f64 {
        self.var_a * (1.0 - self.r2_a_on_x)
    }
}

/// The three factors of the bias and their product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasDecomposition {
    pub bias: f64,
    pub factor_gamma: f64,
    pub factor_proxy_noise: f64,
    pub factor_collinearity: f64,
}

/// Slope of `Y` on an error-prone regressor `X = X* + e_X`.
pub fn attenuation_slope(beta: f64, var_xstar: f64, var_eps_x: f64) -> Result<f64> {
    if !(var_xstar > 0.0) || !(var_eps_x >= 0.0) {
        return Err(Error::domain(format!(
            "need Var(X*) > 0 and Var(eps_X) >= 0 (got {var_xstar}, {var_eps_x})"
        )));
    }
    Ok(beta * var_xstar / (var_xstar + var_eps_x))
}

/// `b_{A~X} / (Var(A) (1 - R^2_{A~X}))`, the observable amplification factor.
pub fn collinearity_ratio(exposure: &ExposureModelStats) -> Result<f64> {
    if 1.0 - exposure.r2_a_on_x < DEGENERACY_TOLERANCE {
        return Err(Error::DegenerateExposure { r_squared: exposure.r2_a_on_x });
    }
    Ok(exposure.beta_a_on_x / exposure.residual_variance())
}

/// Bias of the exposure coefficient when the proxy noise is uncorrelated
/// with the exposure. `bias` is `factor_gamma * factor_proxy_noise *
/// factor_collinearity` evaluated left to right.
pub fn proposition1_bias(proxy: &ProxyModel, exposure: &ExposureModelStats) -> Result<BiasDecomposition> {
    if proxy.cov_a_eps_x != 0.0 {
        return Err(Error::invalid(
            "Cov(A, eps_X) must be zero for the three-factor decomposition; use general_bias",
        ));
    }
    let ratio = collinearity_ratio(exposure)?;
    Ok(BiasDecomposition {
        bias: proxy.gamma * proxy.var_eps_x * ratio,
        factor_gamma: proxy.gamma,
        factor_proxy_noise: proxy.var_eps_x,
        factor_collinearity: ratio,
    })
}

/// Bias of the exposure coefficient without the covariance restriction.
///
/// `cov_a_x` and `var_x` must agree with `exposure.beta_a_on_x` and bound the
/// proxy noise; they are used for validation only, so that the zero-covariance
/// case reproduces [`proposition1_bias`] bit for bit.
pub fn general_bias(
    proxy: &ProxyModel,
    exposure: &ExposureModelStats,
    cov_a_x: f64,
    var_x: f64,
) -> Result<f64> {
    if !(var_x > 0.0) {
        return Err(Error::domain(format!("Var(X) must be positive, got {var_x}")));
    }
    let beta = cov_a_x / var_x;
    if (beta - exposure.beta_a_on_x).abs() > 1e-9 * beta.abs().max(1.0) {
        return Err(Error::invalid(format!(
            "Cov(A,X)/Var(X) = {beta} disagrees with the exposure coefficient {}",
            exposure.beta_a_on_x
        )));
    }
    if proxy.var_eps_x > var_x * (1.0 + 1e-12) {
        return Err(Error::invalid("Var(eps_X) cannot exceed Var(X)"));
    }
    let bound = (proxy.var_eps_x * exposure.var_a).sqrt();
    if proxy.cov_a_eps_x.abs() > bound * (1.0 + 1e-9) {
        return Err(Error::invalid(format!(
            "|Cov(A, eps_X)| = {} exceeds sqrt(Var(eps_X) Var(A)) = {bound}",
            proxy.cov_a_eps_x.abs()
        )));
    }
    let ratio = collinearity_ratio(exposure)?;
    let correction = proxy.cov_a_eps_x / exposure.residual_variance();
    Ok(proxy.gamma * proxy.var_eps_x * ratio - proxy.gamma * correction)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasGridPoint {
    pub gamma: f64,
    pub var_eps_x: f64,
    pub bias: f64,
}

/// Bias over a `(gamma, Var(eps_X))` grid for one exposure model.
pub fn bias_grid(
    exposure: &ExposureModelStats,
    gammas: &[f64],
    var_eps_values: &[f64],
) -> Result<Vec<BiasGridPoint>> {
    let mut out = Vec::with_capacity(gammas.len() * var_eps_values.len());
    for &gamma in gammas {
        for &var_eps_x in var_eps_values {
            let d = proposition1_bias(&ProxyModel::uncorrelated(gamma, var_eps_x)?, exposure)?;
            out.push(BiasGridPoint { gamma, var_eps_x, bias: d.bias });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study1() -> ExposureModelStats {
        ExposureModelStats::from_moments(4.0025, 1.25, 2.0).unwrap()
    }

    #[test]
    fn attenuation_examples() {
        assert!((attenuation_slope(1.0, 1.0, 0.25).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(attenuation_slope(-3.5, 2.0, 0.0).unwrap(), -3.5);
        assert!(attenuation_slope(1.0, 0.0, 1.0).is_err());
        assert!(attenuation_slope(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn no_confounding_means_no_bias() {
        let d = proposition1_bias(&ProxyModel::uncorrelated(0.0, 0.7).unwrap(), &study1()).unwrap();
        assert_eq!(d.bias, 0.0);
    }

    #[test]
    fn study_population_values() {
        // Var(A)(1 - R^2) = 4.0025 - 2^2/1.25 = 0.8025; ratio 1.6/0.8025.
        let e = study1();
        assert!((collinearity_ratio(&e).unwrap() - 1.6 / 0.8025).abs() < 1e-12);
        let d = proposition1_bias(&ProxyModel::uncorrelated(2.0, 0.25).unwrap(), &e).unwrap();
        assert!((d.bias - 0.8 / 0.8025).abs() < 1e-12);
        assert!((d.bias - 0.996_885).abs() < 5e-7);

        let e2 = ExposureModelStats::from_moments(0.89, 1.25, 0.5).unwrap();
        let d2 = proposition1_bias(&ProxyModel::uncorrelated(2.0, 0.25).unwrap(), &e2).unwrap();
        assert!((d2.bias - 0.2 / 0.69).abs() < 1e-12);
        assert!((collinearity_ratio(&e2).unwrap() - 0.579_71).abs() < 5e-6);
    }

    #[test]
    fn factors_multiply_exactly() {
        let d = proposition1_bias(&ProxyModel::uncorrelated(1.7, 0.31).unwrap(), &study1()).unwrap();
        assert_eq!(d.bias, d.factor_gamma * d.factor_proxy_noise * d.factor_collinearity);
    }

    #[test]
    fn zero_exposure_coefficient_gives_zero_ratio() {
        let e = ExposureModelStats::new(0.0, 2.0, 0.0).unwrap();
        assert_eq!(collinearity_ratio(&e).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_exposure() {
        assert!(matches!(
            ExposureModelStats::from_moments(1.0, 1.0, 1.0),
            Err(Error::DegenerateExposure { .. })
        ));
        let e = ExposureModelStats { beta_a_on_x: 1.0, var_a: 1.0, r2_a_on_x: 1.0 - 1e-13 };
        assert!(matches!(collinearity_ratio(&e), Err(Error::DegenerateExposure { .. })));
    }

    #[test]
    fn general_bias_reduces_and_cancels() {
        let e = study1();
        let p0 = ProxyModel::uncorrelated(2.0, 0.25).unwrap();
        let g0 = general_bias(&p0, &e, 2.0, 1.25).unwrap();
        assert_eq!(g0, proposition1_bias(&p0, &e).unwrap().bias);

        let cancel = ProxyModel::new(2.0, 0.25, 0.25 * e.beta_a_on_x).unwrap();
        assert!(general_bias(&cancel, &e, 2.0, 1.25).unwrap().abs() < 1e-12);
        assert!(proposition1_bias(&cancel, &e).is_err());
    }

    #[test]
    fn general_bias_rejects_inconsistent_moments() {
        let e = study1();
        let p = ProxyModel::uncorrelated(2.0, 0.25).unwrap();
        assert!(general_bias(&p, &e, 2.5, 1.25).is_err());
        assert!(general_bias(&p, &e, 2.0, 0.0).is_err());
        let wild = ProxyModel::new(2.0, 0.25, 5.0).unwrap();
        assert!(general_bias(&wild, &e, 2.0, 1.25).is_err());
    }

    #[test]
    fn grid_with_zero_gamma_is_zero() {
        let g = bias_grid(&study1(), &[0.0], &[0.1, 0.25, 1.0]).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.iter().all(|p| p.bias == 0.0));
    }
}
