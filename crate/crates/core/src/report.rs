//! Versioned analysis report with JSON and plain-text renderings.
//!
//! Text mode prints real numbers with five decimals; JSON keeps full
//! precision. Every number in the text form is a field of the JSON form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bias::{BiasDecomposition, BiasGridPoint, ExposureModelStats};
use crate::logit::LogitFit;
use crate::ratio_ci::RatioInterval;
use crate::regress::OlsFit;
use crate::sensitivity::{SensitivityReport, TreatmentSummary};
use crate::simulate::{DgpSpec, PopulationMoments, ReplicateSummary};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Text,
    Json,
}

/// Everything a subcommand needs; echoed verbatim into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub input: Option<String>,
    pub outcome: Option<String>,
    pub exposure: Option<String>,
    pub proxy: Option<String>,
    pub controls: Vec<String>,
    pub stratify: Option<String>,
    pub q: f64,
    pub alpha: f64,
    pub level: f64,
    pub format: OutputFormat,
    pub output: Option<String>,
    pub deterministic: bool,
    pub t_value: Option<f64>,
    pub df: Option<u64>,
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub preset: Option<String>,
    pub spec: Option<String>,
    pub n: usize,
    pub seed: u64,
    pub replicates: Option<usize>,
    pub gamma_grid: Vec<f64>,
    pub var_eps_grid: Vec<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            input: None,
            outcome: None,
            exposure: None,
            proxy: None,
            controls: Vec::new(),
            stratify: None,
            q: 1.0,
            alpha: 0.05,
            level: 0.95,
            format: OutputFormat::Text,
            output: None,
            deterministic: false,
            t_value: None,
            df: None,
            estimate: None,
            std_error: None,
            preset: None,
            spec: None,
            n: 1000,
            seed: 1,
            replicates: None,
            gamma_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            var_eps_grid: vec![0.05, 0.1, 0.25, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_version: u32,
    pub command: String,
    /// Unix time of the run; omitted in deterministic mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
    pub config: AnalysisConfig,
    pub input: Option<InputSummary>,
    pub notes: Vec<String>,
    pub strata: Vec<StratumBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub rows_used: usize,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StratumBlock {
    pub stratum: Option<String>,
    pub n: usize,
    pub ols: Option<OlsSummary>,
    pub vif: Option<Vec<NamedValue>>,
    pub logit: Option<LogitSummary>,
    pub sensitivity: Option<SensitivityBlock>,
    pub exposure_model: Option<ExposureModelStats>,
    pub ratio_interval: Option<RatioInterval>,
    pub bias: Option<BiasDecomposition>,
    pub bias_grid: Option<Vec<BiasGridPoint>>,
    pub simulation: Option<SimulationBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

/// One coefficient; non-finite statistics (exact fits) become `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn rows(names: &[String], est: &[f64], se: &[f64], stat: &[f64], p: &[f64]) -> Vec<CoefficientRow> {
    (0..names.len())
        .map(|j| CoefficientRow {
            name: names[j].clone(),
            estimate: est[j],
            std_error: finite(se[j]),
            statistic: finite(stat[j]),
            p_value: finite(p[j]),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsSummary {
    pub outcome: String,
    pub n: usize,
    pub coefficients: Vec<CoefficientRow>,
    pub r_squared: f64,
    pub residual_variance: f64,
    pub df_residual: usize,
}

impl From<&OlsFit> for OlsSummary {
    fn from(fit: &OlsFit) -> Self {
        Self {
            outcome: fit.outcome.clone(),
            n: fit.n_obs(),
            coefficients: rows(&fit.names, &fit.coefficients, &fit.standard_errors, &fit.t_values, &fit.p_values),
            r_squared: fit.r_squared,
            residual_variance: fit.residual_variance,
            df_residual: fit.df_residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitSummary {
    pub outcome: String,
    pub n: usize,
    pub coefficients: Vec<CoefficientRow>,
    pub log_likelihood: f64,
    /// In-sample C-statistic.
    pub c_statistic: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogitSummary {
    pub fn new(fit: &LogitFit, c_statistic: f64) -> Self {
        Self {
            outcome: fit.outcome.clone(),
            n: fit.fitted_probabilities.len(),
            coefficients: rows(&fit.names, &fit.coefficients, &fit.standard_errors, &fit.z_values, &fit.p_values),
            log_likelihood: fit.log_likelihood,
            c_statistic,
            converged: fit.converged,
            iterations: fit.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBlock {
    pub treatment: String,
    pub summary: TreatmentSummary,
    pub statistics: SensitivityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationBlock {
    pub spec: DgpSpec,
    pub moments: PopulationMoments,
    pub population_bias: f64,
    pub summary: ReplicateSummary,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for note in &self.notes {
            let _ = writeln!(out, "# {note}");
        }
        if let Some(inp) = &self.input {
            if inp.dropped_rows > 0 {
                let _ = writeln!(out, "# dropped {} rows with missing values", inp.dropped_rows);
            }
        }
        for block in &self.strata {
            if !out.is_empty() {
                out.push('\n');
            }
            render_block(&mut out, block);
        }
        out
    }
}

fn f5(v: f64) -> String {
    format!("{v:.5}")
}

fn opt5(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), f5)
}

fn render_coefficients(out: &mut String, coefs: &[CoefficientRow], stat_label: &str) {
    let width = coefs.iter().map(|c| c.name.len()).max().unwrap_or(0).max(11);
    let _ = writeln!(
        out,
        "{:<width$}  {:>12}  {:>12}  {:>12}  {:>10}",
        "", "Estimate", "Std. Error", stat_label, "p-value"
    );
    for c in coefs {
        let _ = writeln!(
            out,
            "{:<width$}  {:>12}  {:>12}  {:>12}  {:>10}",
            c.name,
            f5(c.estimate),
            opt5(c.std_error),
            opt5(c.statistic),
            opt5(c.p_value)
        );
    }
}

fn render_block(out: &mut String, b: &StratumBlock) {
    if let Some(s) = &b.stratum {
        let _ = writeln!(out, "== stratum {s} (n = {}) ==", b.n);
    }
    if let Some(ols) = &b.ols {
        let _ = writeln!(out, "Linear regression of '{}' (n = {}, df = {})", ols.outcome, ols.n, ols.df_residual);
        render_coefficients(out, &ols.coefficients, "t value");
        let _ = writeln!(out, "R-squared: {}", f5(ols.r_squared));
        let _ = writeln!(out, "Residual variance: {}", f5(ols.residual_variance));
    }
    if let Some(v) = &b.vif {
        let _ = writeln!(out, "Variance inflation factors:");
        for nv in v {
            let _ = writeln!(out, "  {}: {}", nv.name, f5(nv.value));
        }
    }
    if let Some(l) = &b.logit {
        let _ = writeln!(
            out,
            "Logistic regression of '{}' (n = {}, iterations = {}, converged = {})",
            l.outcome, l.n, l.iterations, l.converged
        );
        render_coefficients(out, &l.coefficients, "z value");
        let _ = writeln!(out, "Log-likelihood: {}", f5(l.log_likelihood));
        let _ = writeln!(out, "C-statistic (in-sample): {}", f5(l.c_statistic));
    }
    if let Some(s) = &b.sensitivity {
        render_sensitivity(out, s);
    }
    if let Some(e) = &b.exposure_model {
        let _ = writeln!(out, "Exposure model:");
        let _ = writeln!(out, "  Proxy coefficient: {}", f5(e.beta_a_on_x));
        let _ = writeln!(out, "  Exposure variance: {}", f5(e.var_a));
        let _ = writeln!(out, "  R-squared: {}", f5(e.r2_a_on_x));
    }
    if let Some(r) = &b.ratio_interval {
        let _ = writeln!(out, "Amplification ratio (proxy coefficient / residual exposure variance):");
        let _ = writeln!(out, "  Estimate: {}", f5(r.estimate));
        let _ = writeln!(
            out,
            "  Conservative {} interval: [{}, {}]",
            r.level,
            f5(r.lower),
            f5(r.upper)
        );
        let _ = writeln!(
            out,
            "  Wald interval for coefficient ({}): [{}, {}]",
            r.component_level,
            f5(r.beta_interval.0),
            f5(r.beta_interval.1)
        );
        let _ = writeln!(
            out,
            "  Chi-square interval for residual variance ({}): [{}, {}]",
            r.component_level,
            f5(r.variance_interval.0),
            f5(r.variance_interval.1)
        );
    }
    if let Some(d) = &b.bias {
        let _ = writeln!(out, "Bias decomposition:");
        let _ = writeln!(out, "  Confounder effect: {}", f5(d.factor_gamma));
        let _ = writeln!(out, "  Proxy noise variance: {}", f5(d.factor_proxy_noise));
        let _ = writeln!(out, "  Collinearity ratio: {}", f5(d.factor_collinearity));
        let _ = writeln!(out, "  Bias: {}", f5(d.bias));
    }
    if let Some(grid) = &b.bias_grid {
        let _ = writeln!(out, "gamma,var_eps_x,bias");
        for p in grid {
            let _ = writeln!(out, "{},{},{}", f5(p.gamma), f5(p.var_eps_x), f5(p.bias));
        }
    }
    if let Some(sim) = &b.simulation {
        let s = &sim.summary;
        let _ = writeln!(out, "Simulation: {} replicates of n = {} (seed {})", s.replicates, s.n, s.seed);
        let _ = writeln!(out, "  Population bias: {}", f5(sim.population_bias));
        let _ = writeln!(out, "  Population coefficient: {}", f5(s.population_coefficient));
        let _ = writeln!(out, "  Mean estimate: {}", f5(s.mean_estimate));
        let _ = writeln!(out, "  SD of estimate: {}", f5(s.sd_estimate));
        let _ = writeln!(out, "  Monte Carlo SE: {}", f5(s.mc_standard_error));
        let _ = writeln!(out, "  Mean standard error: {}", f5(s.mean_std_error));
        let _ = writeln!(out, "  Mean t-value: {}", f5(s.mean_t_value));
        let _ = writeln!(out, "  Mean partial R2: {}", f5(s.mean_partial_r2));
        let _ = writeln!(out, "  Mean robustness value (q = {}): {}", s.q, f5(s.mean_rv_q));
        let _ = writeln!(
            out,
            "  Mean robustness value (q = {}, alpha = {}): {}",
            s.q,
            s.alpha,
            f5(s.mean_rv_q_alpha)
        );
    }
}

fn render_sensitivity(out: &mut String, s: &SensitivityBlock) {
    let st = &s.statistics;
    let _ = writeln!(out, "Sensitivity Analysis to Unobserved Confounding");
    let _ = writeln!(out);
    let _ = writeln!(out, "Unadjusted Estimates of '{}':", s.treatment);
    if let Some(e) = s.summary.estimate {
        let _ = writeln!(out, "  Coef. estimate: {}", f5(e));
    }
    if let Some(se) = s.summary.std_error {
        let _ = writeln!(out, "  Standard Error: {}", f5(se));
    }
    let _ = writeln!(out, "  t-value: {}", f5(s.summary.t_value));
    let _ = writeln!(out, "  Degrees of freedom: {}", s.summary.df);
    let _ = writeln!(out);
    let _ = writeln!(out, "Sensitivity Statistics:");
    let _ = writeln!(out, "  Partial R2 of treatment with outcome: {}", f5(st.partial_r2));
    let _ = writeln!(out, "  Robustness Value (q = {}): {}", st.q, f5(st.rv_q));
    let _ = writeln!(
        out,
        "  Robustness Value (q = {}, alpha = {}): {}",
        st.q,
        st.alpha,
        f5(st.rv_q_alpha)
    );
}
