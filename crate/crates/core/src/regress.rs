//! Ordinary least squares with classical inference.
//!
//! Coefficients come from a Householder QR factorization of the design, so
//! strongly collinear (but not exactly collinear) regressors are handled
//! without forming `X'X`. Exact collinearity is reported as
//! [`Error::RankDeficient`] using the singular-value ratio of `R`.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distrib::t_cdf;
use crate::error::{Error, Result};
use crate::linalg::{check_full_rank, design_matrix, least_squares, pairwise_sum};

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub outcome: String,
    /// Coefficient labels; `(Intercept)` first when an intercept was fitted.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    /// `RSS / df_residual`.
    pub residual_variance: f64,
    pub df_residual: usize,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub has_intercept: bool,
}

impl OlsFit {
    pub fn n_obs(&self) -> usize {
        self.residuals.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn coefficient(&self, name: &str) -> Result<f64> {
        Ok(self.coefficients[self.index_of(name)?])
    }

    pub fn standard_error(&self, name: &str) -> Result<f64> {
        Ok(self.standard_errors[self.index_of(name)?])
    }

    pub fn rss(&self) -> f64 {
        let sq: Vec<f64> = self.residuals.iter().map(|r| r * r).collect();
        pairwise_sum(&sq)
    }
}

/// Fits `outcome ~ regressors` (plus an intercept when requested).
pub fn fit_ols<S: AsRef<str>>(
    data: &Dataset,
    outcome: &str,
    regressors: &[S],
    include_intercept: bool,
) -> Result<OlsFit> {
    let n = data.n_rows();
    let p = regressors.len() + usize::from(include_intercept);
    if p == 0 {
        return Err(Error::invalid("no regressors and no intercept"));
    }
    if n <= p {
        return Err(Error::InsufficientRows { rows: n, parameters: p });
    }
    let y = data.column(outcome)?;
    let cols = regressors
        .iter()
        .map(|r| data.column(r.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let x = design_matrix(&cols, include_intercept, n);
    let ls = least_squares(x.clone(), y)?;
    let beta = ls.coefficients;

    let fitted: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum())
        .collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let df_residual = n - p;

    let sq: Vec<f64> = residuals.iter().map(|r| r * r).collect();
    let rss = pairwise_sum(&sq);
    let residual_variance = rss / df_residual as f64;

    let tss = if include_intercept {
        let mean = pairwise_sum(y) / n as f64;
        let dev: Vec<f64> = y.iter().map(|v| (v - mean) * (v - mean)).collect();
        pairwise_sum(&dev)
    } else {
        let sq: Vec<f64> = y.iter().map(|v| v * v).collect();
        pairwise_sum(&sq)
    };
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let mut standard_errors = Vec::with_capacity(p);
    let mut t_values = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for (j, &b) in beta.iter().enumerate() {
        let se = (residual_variance * ls.unscaled_covariance[(j, j)]).max(0.0).sqrt();
        let t = if se > 0.0 {
            b / se
        } else if b == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(b)
        };
        let pv = 2.0 * (1.0 - t_cdf(t.abs(), df_residual as u64)?);
        standard_errors.push(se);
        t_values.push(t);
        p_values.push(pv.clamp(0.0, 1.0));
    }

    let mut names = Vec::with_capacity(p);
    if include_intercept {
        names.push(INTERCEPT.to_string());
    }
    names.extend(regressors.iter().map(|r| r.as_ref().to_string()));

    Ok(OlsFit {
        outcome: outcome.to_string(),
        names,
        coefficients: beta,
        standard_errors,
        t_values,
        p_values,
        r_squared,
        residual_variance,
        df_residual,
        fitted,
        residuals,
        has_intercept: include_intercept,
    })
}

/// `RSS / df_residual` recomputed from the stored residuals.
pub fn residual_variance_of(fit: &OlsFit) -> f64 {
    fit.rss() / fit.df_residual as f64
}

/// Variance inflation factor `1 / (1 - R^2_j)` of every regressor, where
/// `R^2_j` comes from regressing it on the others (with an intercept).
pub fn vif<S: AsRef<str>>(data: &Dataset, regressors: &[S]) -> Result<Vec<f64>> {
    if regressors.len() < 2 {
        return Err(Error::invalid("VIF needs at least two regressors"));
    }
    let cols = regressors
        .iter()
        .map(|r| data.column(r.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    check_full_rank(design_matrix(&cols, true, data.n_rows()))?;
    (0..regressors.len())
        .map(|j| {
            let others: Vec<&str> = regressors
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, r)| r.as_ref())
                .collect();
            let fit = fit_ols(data, regressors[j].as_ref(), &others, true)?;
            Ok(1.0 / (1.0 - fit.r_squared))
        })
        .collect()
}
