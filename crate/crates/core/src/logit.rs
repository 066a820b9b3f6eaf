//! Logistic regression by iteratively reweighted least squares, plus the
//! C-statistic (area under the ROC curve) of the fitted scores.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distrib::erfc;
use crate::error::{Error, Result};
use crate::linalg::{check_full_rank, design_matrix, least_squares};
use crate::regress::INTERCEPT;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the max-norm of the score `X'(y - p)`.
    pub gradient_tolerance: f64,
    /// A coefficient larger than this in magnitude signals separation.
    pub separation_bound: f64,
}

impl Default for LogitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            gradient_tolerance: 1e-8,
            separation_bound: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitFit {
    pub outcome: String,
    /// Coefficient labels, `(Intercept)` first.
    pub names: Vec<String>,
    /// Log-odds coefficients.
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub fitted_probabilities: Vec<f64>,
    pub log_likelihood: f64,
    pub gradient_max_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogitFit {
    pub fn coefficient(&self, name: &str) -> Result<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn log_likelihood(y: &[f64], eta: &[f64]) -> f64 {
    y.iter().zip(eta).map(|(y, e)| y * e - softplus(*e)).sum()
}

/// Checks that `y` is strictly 0/1 with both classes present.
pub(crate) fn check_binary(y: &[f64], label: &str) -> Result<()> {
    if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid(format!(
            "outcome '{label}' must be exactly 0 or 1, found {v}"
        )));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::NoVariation(format!(
            "outcome '{label}' has a single class"
        )));
    }
    Ok(())
}

pub fn fit_logit<S: AsRef<str>>(data: &Dataset, outcome: &str, regressors: &[S]) -> Result<LogitFit> {
    fit_logit_with(data, outcome, regressors, &LogitOptions::default())
}

/// Maximizes the Bernoulli log-likelihood of `outcome ~ 1 + regressors`.
///
/// Each iteration takes a Newton step (a weighted least-squares solve) and
/// halves it until the log-likelihood does not decrease. A fit that exhausts
/// `max_iterations` is returned with `converged = false`.
pub fn fit_logit_with<S: AsRef<str>>(
    data: &Dataset,
    outcome: &str,
    regressors: &[S],
    opts: &LogitOptions,
) -> Result<LogitFit> {
    let n = data.n_rows();
    let y = data.column(outcome)?;
    check_binary(y, outcome)?;
    let cols = regressors
        .iter()
        .map(|r| data.column(r.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let x = design_matrix(&cols, true, n);
    let p = x.ncols();
    if n <= p {
        return Err(Error::InsufficientRows { rows: n, parameters: p });
    }
    check_full_rank(x.clone())?;

    let linear_predictor = |beta: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    };
    let score = |probs: &[f64]| -> Vec<f64> {
        (0..p)
            .map(|j| {
                x.column(j)
                    .iter()
                    .zip(y.iter().zip(probs))
                    .map(|(xij, (yi, pi))| xij * (yi - pi))
                    .sum()
            })
            .collect()
    };
    let max_abs = |v: &[f64]| v.iter().fold(0.0_f64, |m, g| m.max(g.abs()));

    let mut beta = vec![0.0; p];
    let mut eta = linear_predictor(&beta);
    let mut ll = log_likelihood(y, &eta);
    let mut iterations = 0;
    let (probs, grad_norm, converged) = loop {
        let probs: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let grad_norm = max_abs(&score(&probs));
        if grad_norm <= opts.gradient_tolerance {
            break (probs, grad_norm, true);
        }
        if iterations == opts.max_iterations {
            break (probs, grad_norm, false);
        }
        let (wx, z) = weighted_system(&x, y, &probs);
        let step = match least_squares(wx, &z) {
            Ok(ls) => ls.coefficients,
            Err(Error::RankDeficient { .. }) => {
                return Err(Error::Separation { magnitude: max_abs(&beta) })
            }
            Err(e) => return Err(e),
        };
        let mut scale = 1.0;
        let (cand, cand_eta, cand_ll) = loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_eta = linear_predictor(&cand);
            let cand_ll = log_likelihood(y, &cand_eta);
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) || scale < 1e-9 {
                break (cand, cand_eta, cand_ll);
            }
            scale *= 0.5;
        };
        beta = cand;
        eta = cand_eta;
        ll = cand_ll;
        iterations += 1;
        let magnitude = max_abs(&beta);
        if magnitude > opts.separation_bound {
            return Err(Error::Separation { magnitude });
        }
    };

    let (wx, z) = weighted_system(&x, y, &probs);
    let cov = match least_squares(wx, &z) {
        Ok(ls) => ls.unscaled_covariance,
        Err(Error::RankDeficient { .. }) => {
            return Err(Error::Separation { magnitude: max_abs(&beta) })
        }
        Err(e) => return Err(e),
    };
    let standard_errors: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let z_values: Vec<f64> = beta.iter().zip(&standard_errors).map(|(b, s)| b / s).collect();
    let p_values = z_values
        .iter()
        .map(|z| erfc(z.abs() / std::f64::consts::SQRT_2))
        .collect();

    let mut names = vec![INTERCEPT.to_string()];
    names.extend(regressors.iter().map(|r| r.as_ref().to_string()));
    let eps = f64::EPSILON;
    Ok(LogitFit {
        outcome: outcome.to_string(),
        names,
        coefficients: beta,
        standard_errors,
        z_values,
        p_values,
        fitted_probabilities: probs.iter().map(|p| p.clamp(eps, 1.0 - eps)).collect(),
        log_likelihood: ll,
        gradient_max_norm: grad_norm,
        converged,
        iterations,
    })
}

/// Rows of `X` scaled by `sqrt(w)` and the working response `(y - p)/sqrt(w)`,
/// so that the least-squares solution is the Newton step.
fn weighted_system(
    x: &nalgebra::DMatrix<f64>,
    y: &[f64],
    probs: &[f64],
) -> (nalgebra::DMatrix<f64>, Vec<f64>) {
    let sw: Vec<f64> = probs.iter().map(|p| (p * (1.0 - p)).sqrt()).collect();
    let mut wx = x.clone();
    for (i, &s) in sw.iter().enumerate() {
        wx.row_mut(i).scale_mut(s);
    }
    let z = y
        .iter()
        .zip(probs)
        .zip(&sw)
        .map(|((y, p), s)| if *s > 0.0 { (y - p) / s } else { 0.0 })
        .collect();
    (wx, z)
}

/// C-statistic of a fitted logistic model against the observed outcome.
pub fn c_statistic(fit: &LogitFit, outcome: &[f64]) -> Result<f64> {
    c_statistic_scores(&fit.fitted_probabilities, outcome)
}

/// Probability that a random positive case scores above a random negative
/// one, counting ties as one half. Computed from midranks in O(n log n).
pub fn c_statistic_scores(scores: &[f64], outcome: &[f64]) -> Result<f64> {
    if scores.len() != outcome.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} outcomes",
            scores.len(),
            outcome.len()
        )));
    }
    check_binary(outcome, "outcome")?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks are 1-based; tied block [start, end) shares the midrank.
        let midrank = 0.5 * ((start + 1) + end) as f64;
        let positives = order[start..end].iter().filter(|&&i| outcome[i] == 1.0).count();
        positive_rank_sum += midrank * positives as f64;
        start = end;
    }
    let n1 = outcome.iter().filter(|&&v| v == 1.0).count() as f64;
    let n0 = outcome.len() as f64 - n1;
    Ok((positive_rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}
