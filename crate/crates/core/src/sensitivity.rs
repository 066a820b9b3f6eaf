//! Robustness values and partial R² of the treatment, computed from the
//! treatment's t-statistic and residual degrees of freedom.

use serde::{Deserialize, Serialize};

use crate::distrib::{t_quantile, TailProbability};
use crate::error::{Error, Result};
use crate::regress::OlsFit;

/// Largest `f64` strictly below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentSummary {
    pub t_value: f64,
    pub df: u64,
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
}

impl TreatmentSummary {
    pub fn new(t_value: f64, df: u64) -> Result<Self> {
        if df < 1 {
            return Err(Error::domain("degrees of freedom must be at least 1"));
        }
        if !t_value.is_finite() {
            return Err(Error::domain(format!("t-value must be finite, got {t_value}")));
        }
        Ok(Self { t_value, df, estimate: None, std_error: None })
    }

    /// Attaches the estimate and standard error; they must reproduce the
    /// t-value to 1e-8 relative when the standard error is positive.
    pub fn with_estimate(mut self, estimate: f64, std_error: f64) -> Result<Self> {
        if !(std_error >= 0.0) {
            return Err(Error::domain("standard error must be non-negative"));
        }
        if std_error > 0.0 {
            let implied = estimate / std_error;
            if (implied - self.t_value).abs() > 1e-8 * self.t_value.abs().max(1e-300) {
                return Err(Error::invalid(format!(
                    "estimate / std_error = {implied} does not match t = {}",
                    self.t_value
                )));
            }
        }
        self.estimate = Some(estimate);
        self.std_error = Some(std_error);
        Ok(self)
    }

    /// Summary of `treatment`'s coefficient in an OLS fit.
    pub fn from_fit(fit: &OlsFit, treatment: &str) -> Result<Self> {
        let j = fit.index_of(treatment)?;
        let se = fit.standard_errors[j];
        if !(se > 0.0) {
            return Err(Error::domain(format!(
                "treatment '{treatment}' has a zero standard error (exact fit)"
            )));
        }
        Ok(Self {
            t_value: fit.t_values[j],
            df: fit.df_residual as u64,
            estimate: Some(fit.coefficients[j]),
            std_error: Some(se),
        })
    }

    /// Cohen's f of the treatment, `|t| / sqrt(df)`.
    pub fn cohen_f(&self) -> f64 {
        self.t_value.abs() / (self.df as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub partial_r2: f64,
    pub rv_q: f64,
    pub rv_q_alpha: f64,
    pub q: f64,
    pub alpha: f64,
}

/// Partial R² of the treatment with the outcome, `t² / (t² + df)`.
pub fn partial_r2(ts: &TreatmentSummary) -> f64 {
    let t2 = ts.t_value * ts.t_value;
    t2 / (t2 + ts.df as f64)
}

/// Solves `rv² / (1 - rv) = f²` for `rv` in `[0, 1)`.
///
/// Same root as `(sqrt(f^4 + 4 f^2) - f^2) / 2`, rewritten as
/// `2f / (sqrt(f^2 + 4) + f)` to avoid cancellation for large `f`.
fn rv_from_f(f: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    (2.0 * f / ((f * f + 4.0).sqrt() + f)).min(BELOW_ONE)
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::domain(format!("q must be positive, got {q}")));
    }
    Ok(())
}

/// Strength (as partial R² with treatment and outcome) an unobserved
/// confounder needs to remove a fraction `q` of the estimate.
pub fn robustness_value(ts: &TreatmentSummary, q: f64) -> Result<f64> {
    check_q(q)?;
    Ok(rv_from_f(q * ts.cohen_f()))
}

/// Like [`robustness_value`], but for bringing the reduced estimate's
/// two-sided `alpha`-level test to the boundary of significance.
pub fn robustness_value_alpha(ts: &TreatmentSummary, q: f64, alpha: f64) -> Result<f64> {
    check_q(q)?;
    if ts.df < 2 {
        return Err(Error::domain("the alpha-adjusted robustness value needs df >= 2"));
    }
    let upper = TailProbability::new(1.0 - alpha / 2.0)
        .ok()
        .filter(|_| alpha > 0.0 && alpha < 1.0)
        .ok_or_else(|| Error::domain(format!("alpha must lie in (0, 1), got {alpha}")))?;
    let dof = ts.df - 1;
    let f_crit = t_quantile(upper, dof)? / (dof as f64).sqrt();
    Ok(rv_from_f(q * ts.cohen_f() - f_crit))
}

pub fn sensitivity_report(ts: &TreatmentSummary, q: f64, alpha: f64) -> Result<SensitivityReport> {
    Ok(SensitivityReport {
        partial_r2: partial_r2(ts),
        rv_q: robustness_value(ts, q)?,
        rv_q_alpha: robustness_value_alpha(ts, q, alpha)?,
        q,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_t_gives_zero_everything() {
        let ts = TreatmentSummary::new(0.0, 997).unwrap();
        assert_eq!(partial_r2(&ts), 0.0);
        assert_eq!(robustness_value(&ts, 1.0).unwrap(), 0.0);
        assert_eq!(robustness_value_alpha(&ts, 1.0, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn insignificant_t_gives_zero_alpha_rv() {
        let ts = TreatmentSummary::new(1.5, 100).unwrap();
        assert!(robustness_value(&ts, 1.0).unwrap() > 0.0);
        assert_eq!(robustness_value_alpha(&ts, 1.0, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn rv_stays_below_one() {
        let ts = TreatmentSummary::new(1e12, 3).unwrap();
        let rv = robustness_value(&ts, 1.0).unwrap();
        assert!(rv < 1.0);
    }

    #[test]
    fn invalid_arguments() {
        assert!(TreatmentSummary::new(1.0, 0).is_err());
        let ts = TreatmentSummary::new(2.0, 1).unwrap();
        assert!(robustness_value_alpha(&ts, 1.0, 0.05).is_err());
        let ts = TreatmentSummary::new(2.0, 10).unwrap();
        assert!(robustness_value(&ts, 0.0).is_err());
        assert!(robustness_value_alpha(&ts, 1.0, 1.0).is_err());
        assert!(robustness_value_alpha(&ts, 1.0, 0.0).is_err());
    }

    #[test]
    fn estimate_must_match_t() {
        let ts = TreatmentSummary::new(4.0, 50).unwrap();
        assert!(ts.with_estimate(2.0, 0.5).is_ok());
        assert!(ts.with_estimate(2.0, 0.4).is_err());
    }
}
