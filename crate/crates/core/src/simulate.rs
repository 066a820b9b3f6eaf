//! Linear structural-equation simulator and its closed-form population moments.
//!
//! The model, with `U`, `z_X`, `z_A`, `z_Y` independent standard normals:
//!
//! ```text
//! e_X = x_noise_sd * z_X
//! X   = U + e_X
//! A   = exposure_intercept + a_on_u * U + a_on_eps_x * e_X + a_noise_sd * z_A
//! Y   = outcome_intercept + beta * A + theta_x * X + gamma * U + y_noise_sd * z_Y
//! ```
//!
//! # Reproducibility
//!
//! Every dataset is drawn from a ChaCha8 stream (`rand_chacha`) seeded with
//! a 64-bit seed. Replicate `i` of a study with base seed `s` uses the seed
//! `splitmix64(s + (i + 1) * 0x9E3779B97F4A7C15)`. Normal variates are
//! `Phi^{-1}((k + 0.5) / 2^53)` with `k` the top 53 bits of the next `u64`,
//! so a stream is fully determined by the generator and this crate's normal
//! quantile. Columns are drawn one after another: all of `U`, then `z_X`,
//! `z_A`, `z_Y`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{general_bias, proposition1_bias, BiasDecomposition, ExposureModelStats, ProxyModel};
use crate::dataset::Dataset;
use crate::distrib::{normal_quantile, TailProbability};
use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::regress::fit_ols;
use crate::sensitivity::{sensitivity_report, TreatmentSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub beta: f64,
    pub gamma: f64,
    pub theta_x: f64,
    pub a_on_u: f64,
    pub a_noise_sd: f64,
    pub x_noise_sd: f64,
    pub y_noise_sd: f64,
    #[serde(default)]
    pub a_on_eps_x: f64,
    #[serde(default)]
    pub exposure_intercept: f64,
    #[serde(default)]
    pub outcome_intercept: f64,
}

impl DgpSpec {
    /// Strongly proxy-predicted exposure.
    pub fn study1() -> Self {
        Self {
            beta: 2.4,
            gamma: 2.0,
            theta_x: 0.0,
            a_on_u: 2.0,
            a_noise_sd: 0.05,
            x_noise_sd: 0.5,
            y_noise_sd: 1.5,
            a_on_eps_x: 0.0,
            exposure_intercept: 0.0,
            outcome_intercept: 0.0,
        }
    }

    /// Weakly proxy-predicted exposure.
    pub fn study2() -> Self {
        Self {
            beta: 3.0,
            a_on_u: 0.5,
            a_noise_sd: 0.8,
            y_noise_sd: 1.0,
            ..Self::study1()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "study1" => Ok(Self::study1()),
            "study2" => Ok(Self::study2()),
            other => Err(Error::invalid(format!(
                "unknown preset '{other}' (expected study1 or study2)"
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.beta,
            self.gamma,
            self.theta_x,
            self.a_on_u,
            self.a_noise_sd,
            self.x_noise_sd,
            self.y_noise_sd,
            self.a_on_eps_x,
            self.exposure_intercept,
            self.outcome_intercept,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("all DGP parameters must be finite"));
        }
        if self.a_noise_sd < 0.0 || self.x_noise_sd < 0.0 || self.y_noise_sd < 0.0 {
            return Err(Error::invalid("noise standard deviations must be non-negative"));
        }
        Ok(())
    }
}

/// Second moments implied by a [`DgpSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationMoments {
    pub var_a: f64,
    pub var_x: f64,
    pub var_u: f64,
    pub cov_a_x: f64,
    pub cov_a_u: f64,
    pub cov_u_x: f64,
    pub cov_a_eps_x: f64,
    pub var_eps_x: f64,
}

impl PopulationMoments {
    pub fn exposure_stats(&self) -> Result<ExposureModelStats> {
        ExposureModelStats::from_moments(self.var_a, self.var_x, self.cov_a_x)
    }
}

pub fn population_moments(spec: &DgpSpec) -> PopulationMoments {
    let var_u = 1.0;
    let var_eps_x = spec.x_noise_sd * spec.x_noise_sd;
    let cov_a_eps_x = spec.a_on_eps_x * var_eps_x;
    PopulationMoments {
        var_a: spec.a_on_u * spec.a_on_u * var_u
            + spec.a_on_eps_x * spec.a_on_eps_x * var_eps_x
            + spec.a_noise_sd * spec.a_noise_sd,
        var_x: var_u + var_eps_x,
        var_u,
        cov_a_x: spec.a_on_u * var_u + cov_a_eps_x,
        cov_a_u: spec.a_on_u * var_u,
        cov_u_x: var_u,
        cov_a_eps_x,
        var_eps_x,
    }
}

fn proxy_model(spec: &DgpSpec, m: &PopulationMoments) -> Result<ProxyModel> {
    ProxyModel::new(spec.gamma, m.var_eps_x, m.cov_a_eps_x)
}

/// Population bias of the exposure coefficient in `Y ~ A + X`.
pub fn population_ols_bias(spec: &DgpSpec) -> Result<f64> {
    let m = population_moments(spec);
    general_bias(&proxy_model(spec, &m)?, &m.exposure_stats()?, m.cov_a_x, m.var_x)
}

/// Three-factor decomposition of the population bias; requires
/// `a_on_eps_x = 0`.
pub fn population_decomposition(spec: &DgpSpec) -> Result<BiasDecomposition> {
    let m = population_moments(spec);
    proposition1_bias(&proxy_model(spec, &m)?, &m.exposure_stats()?)
}

/// Population value of the exposure coefficient in `Y ~ A + X`.
pub fn population_coefficient(spec: &DgpSpec) -> Result<f64> {
    Ok(spec.beta + population_ols_bias(spec)?)
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under base seed `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Standard-normal variates by inverse-CDF transform of a ChaCha8 stream.
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        let u = TailProbability::new(self.uniform()).expect("uniform draw lies strictly inside (0, 1)");
        normal_quantile(u)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_normal()).collect()
    }
}

/// Draws `n` rows with columns `u`, `x`, `a`, `y`.
pub fn generate(spec: &DgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let mut stream = NormalStream::new(seed);
    let u = stream.normals(n);
    let zx = stream.normals(n);
    let za = stream.normals(n);
    let zy = stream.normals(n);

    let mut x = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let eps_x = spec.x_noise_sd * zx[i];
        let xi = u[i] + eps_x;
        let ai = spec.exposure_intercept + spec.a_on_u * u[i] + spec.a_on_eps_x * eps_x + spec.a_noise_sd * za[i];
        let yi = spec.outcome_intercept
            + spec.beta * ai
            + spec.theta_x * xi
            + spec.gamma * u[i]
            + spec.y_noise_sd * zy[i];
        x.push(xi);
        a.push(ai);
        y.push(yi);
    }
    Dataset::from_pairs([("u", u), ("x", x), ("a", a), ("y", y)])
}

/// Classical measurement-error model: `Y = intercept + beta X* + e_Y` with
/// the regressor observed as `X = X* + e_X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementErrorSpec {
    pub beta: f64,
    pub intercept: f64,
    pub var_xstar: f64,
    pub var_eps_x: f64,
    pub y_noise_sd: f64,
}

/// Draws `n` rows with columns `xstar`, `x`, `y`.
pub fn generate_measurement_error(spec: &MeasurementErrorSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    if !(spec.var_xstar >= 0.0) || !(spec.var_eps_x >= 0.0) || !(spec.y_noise_sd >= 0.0) {
        return Err(Error::invalid("variances must be non-negative"));
    }
    let mut stream = NormalStream::new(seed);
    let sd_star = spec.var_xstar.sqrt();
    let sd_eps = spec.var_eps_x.sqrt();
    let xstar: Vec<f64> = stream.normals(n).into_iter().map(|z| sd_star * z).collect();
    let x: Vec<f64> = xstar.iter().map(|v| v + sd_eps * stream.next_normal()).collect();
    let y: Vec<f64> = xstar
        .iter()
        .map(|v| spec.intercept + spec.beta * v + spec.y_noise_sd * stream.next_normal())
        .collect();
    Dataset::from_pairs([("xstar", xstar), ("x", x), ("y", y)])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateConfig {
    pub q: f64,
    pub alpha: f64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self { q: 1.0, alpha: 0.05, workers: None }
    }
}

/// Exposure-coefficient results of one replicate of `y ~ a + x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub seed: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub partial_r2: f64,
    pub rv_q: f64,
    pub rv_q_alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub population_coefficient: f64,
    pub mean_estimate: f64,
    /// Sample SD across replicates (zero for a single replicate).
    pub sd_estimate: f64,
    /// `sd_estimate / sqrt(replicates)`.
    pub mc_standard_error: f64,
    pub mean_std_error: f64,
    pub mean_t_value: f64,
    pub mean_partial_r2: f64,
    pub mean_rv_q: f64,
    pub mean_rv_q_alpha: f64,
    pub q: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateStudy {
    pub summary: ReplicateSummary,
    pub results: Vec<ReplicateResult>,
}

pub fn replicate_study(spec: &DgpSpec, n: usize, replicates: usize, seed: u64) -> Result<ReplicateStudy> {
    replicate_study_with(spec, n, replicates, seed, &ReplicateConfig::default())
}

/// Simulates `replicates` independent studies and fits `y ~ a + x` to each.
/// Results depend only on `(spec, n, replicates, seed, q, alpha)`, never on
/// the number of workers.
pub fn replicate_study_with(
    spec: &DgpSpec,
    n: usize,
    replicates: usize,
    seed: u64,
    config: &ReplicateConfig,
) -> Result<ReplicateStudy> {
    if replicates == 0 {
        return Err(Error::invalid("at least one replicate is required"));
    }
    let one = |i: usize| -> Result<ReplicateResult> {
        let rep_seed = derive_seed(seed, i as u64);
        let data = generate(spec, n, rep_seed)?;
        let fit = fit_ols(&data, "y", &["a", "x"], true)?;
        let ts = TreatmentSummary::from_fit(&fit, "a")?;
        let sens = sensitivity_report(&ts, config.q, config.alpha)?;
        Ok(ReplicateResult {
            seed: rep_seed,
            estimate: fit.coefficient("a")?,
            std_error: fit.standard_error("a")?,
            t_value: ts.t_value,
            partial_r2: sens.partial_r2,
            rv_q: sens.rv_q,
            rv_q_alpha: sens.rv_q_alpha,
        })
    };
    let run = || (0..replicates).into_par_iter().map(one).collect::<Result<Vec<_>>>();
    let results = match config.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let mean = |f: fn(&ReplicateResult) -> f64| {
        let v: Vec<f64> = results.iter().map(f).collect();
        pairwise_sum(&v) / v.len() as f64
    };
    let mean_estimate = mean(|r| r.estimate);
    let sd_estimate = if replicates > 1 {
        let dev: Vec<f64> = results
            .iter()
            .map(|r| (r.estimate - mean_estimate).powi(2))
            .collect();
        (pairwise_sum(&dev) / (replicates - 1) as f64).sqrt()
    } else {
        0.0
    };
    let summary = ReplicateSummary {
        n,
        replicates,
        seed,
        population_coefficient: population_coefficient(spec)?,
        mean_estimate,
        sd_estimate,
        mc_standard_error: sd_estimate / (replicates as f64).sqrt(),
        mean_std_error: mean(|r| r.std_error),
        mean_t_value: mean(|r| r.t_value),
        mean_partial_r2: mean(|r| r.partial_r2),
        mean_rv_q: mean(|r| r.rv_q),
        mean_rv_q_alpha: mean(|r| r.rv_q_alpha),
        q: config.q,
        alpha: config.alpha,
    };
    Ok(ReplicateStudy { summary, results })
}
