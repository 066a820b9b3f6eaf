//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 parse, 3 numeric (rank deficiency,
//! separation, degenerate models), 4 non-convergence.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bias::{bias_grid, ExposureModelStats};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ingest::{ingest_csv, Ingested};
use crate::logit::{c_statistic, fit_logit};
use crate::ratio_ci::ratio_interval_from_fit;
use crate::regress::{fit_ols, vif, OlsFit};
use crate::report::{
    AnalysisConfig, InputSummary, LogitSummary, NamedValue, OlsSummary, OutputFormat, Report, SensitivityBlock,
    SimulationBlock, StratumBlock, REPORT_VERSION,
};
use crate::sensitivity::{sensitivity_report, TreatmentSummary};
use crate::simulate::{
    generate, population_decomposition, population_moments, population_ols_bias, replicate_study_with, DgpSpec,
    ReplicateConfig,
};

pub const THREADS_ENV: &str = "CONFOUND_LENS_THREADS";

const AFTER_HELP: &str = "\
Categorical CSV columns are expanded to 0/1 indicators named column:level.
The reference (omitted) level is the most frequent one; ties go to the
alphabetically first level. Rows with any empty cell are dropped.

Exit codes: 1 usage, 2 parse, 3 numeric/rank, 4 convergence.";

#[derive(Debug, Parser)]
#[command(name = "confound-lens", version, about = "Collinearity-amplified confounding bias and sensitivity analysis")]
#[command(after_help = AFTER_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Linear regression of the outcome (or the exposure) with VIFs.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Logistic regression with the in-sample C-statistic.
    Logit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Partial R2 and robustness values of the exposure.
    Sensitivity {
        #[command(flatten)]
        data: DataArgs,
        /// t-value of the treatment (summary-statistics mode; no input file).
        #[arg(long = "t", allow_hyphen_values = true)]
        t_value: Option<f64>,
        /// Residual degrees of freedom (summary-statistics mode).
        #[arg(long)]
        df: Option<u64>,
        #[arg(long, allow_hyphen_values = true, requires = "se")]
        estimate: Option<f64>,
        #[arg(long, requires = "estimate")]
        se: Option<f64>,
        #[command(flatten)]
        stats: StatArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Bias over a (gamma, proxy noise variance) grid, as CSV in text mode.
    BiasGrid {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        gamma_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        var_eps_grid: Option<Vec<f64>>,
        #[command(flatten)]
        dgp: DgpArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Conservative interval for the amplification ratio.
    RatioCi {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Draw a dataset (CSV) or, with --replicates, run a Monte Carlo study.
    Simulate {
        #[command(flatten)]
        dgp: DgpArgs,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        replicates: Option<usize>,
        #[command(flatten)]
        stats: StatArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file, or - for standard input.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long)]
    pub exposure: Option<String>,
    #[arg(long)]
    pub proxy: Option<String>,
    /// Comma-separated control columns; categorical names expand to their indicators.
    #[arg(long, value_delimiter = ',')]
    pub controls: Vec<String>,
    /// Fit each level of this column separately.
    #[arg(long)]
    pub stratify: Option<String>,
}

#[derive(Debug, Args)]
pub struct StatArgs {
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct DgpArgs {
    /// study1 or study2.
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    /// Path to a JSON DgpSpec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Write here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Omit the timestamp so identical runs give identical bytes.
    #[arg(long)]
    pub deterministic: bool,
}

fn path_string(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.to_string_lossy().into_owned())
}

fn apply_data(c: &mut AnalysisConfig, d: DataArgs) {
    c.input = path_string(&d.input);
    c.outcome = d.outcome;
    c.exposure = d.exposure;
    c.proxy = d.proxy;
    c.controls = d.controls.into_iter().filter(|s| !s.is_empty()).collect();
    c.stratify = d.stratify;
}

fn apply_out(c: &mut AnalysisConfig, o: OutputArgs) {
    c.format = o.format;
    c.output = path_string(&o.output);
    c.deterministic = o.deterministic;
}

fn apply_dgp(c: &mut AnalysisConfig, d: DgpArgs) {
    c.preset = d.preset;
    c.spec = path_string(&d.spec);
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit { .. } => "fit",
            Command::Logit { .. } => "logit",
            Command::Sensitivity { .. } => "sensitivity",
            Command::BiasGrid { .. } => "bias-grid",
            Command::RatioCi { .. } => "ratio-ci",
            Command::Simulate { .. } => "simulate",
        }
    }

    pub fn into_config(self) -> AnalysisConfig {
        let mut c = AnalysisConfig::default();
        match self {
            Command::Fit { data, out } | Command::Logit { data, out } => {
                apply_data(&mut c, data);
                apply_out(&mut c, out);
            }
            Command::Sensitivity { data, t_value, df, estimate, se, stats, out } => {
                apply_data(&mut c, data);
                c.t_value = t_value;
                c.df = df;
                c.estimate = estimate;
                c.std_error = se;
                c.q = stats.q;
                c.alpha = stats.alpha;
                apply_out(&mut c, out);
            }
            Command::BiasGrid { data, gamma_grid, var_eps_grid, dgp, out } => {
                apply_data(&mut c, data);
                if let Some(g) = gamma_grid {
                    c.gamma_grid = g;
                }
                if let Some(v) = var_eps_grid {
                    c.var_eps_grid = v;
                }
                apply_dgp(&mut c, dgp);
                apply_out(&mut c, out);
            }
            Command::RatioCi { data, level, out } => {
                apply_data(&mut c, data);
                c.level = level;
                apply_out(&mut c, out);
            }
            Command::Simulate { dgp, n, seed, replicates, stats, out } => {
                apply_dgp(&mut c, dgp);
                c.n = n;
                c.seed = seed;
                c.replicates = replicates;
                c.q = stats.q;
                c.alpha = stats.alpha;
                apply_out(&mut c, out);
            }
        }
        c
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::invalid(format!("--q must be positive, got {}", self.q)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("--alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid(format!("--level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }

    fn require<'a>(value: &'a Option<String>, flag: &str) -> Result<&'a str> {
        value.as_deref().ok_or_else(|| Error::invalid(format!("--{flag} is required")))
    }

    fn dgp(&self) -> Result<DgpSpec> {
        match (&self.preset, &self.spec) {
            (Some(p), None) => DgpSpec::preset(p),
            (None, Some(path)) => DgpSpec::from_json(&std::fs::read_to_string(path)?),
            (None, None) => Err(Error::invalid("one of --preset or --spec is required")),
            (Some(_), Some(_)) => Err(Error::invalid("--preset and --spec are mutually exclusive")),
        }
    }
}

/// Loaded input plus the per-stratum datasets to analyse.
struct Loaded {
    input: InputSummary,
    strata: Vec<(Option<String>, Dataset)>,
}

fn load(config: &AnalysisConfig) -> Result<Loaded> {
    let path = AnalysisConfig::require(&config.input, "input")?;
    let Ingested { dataset, dropped_rows } = ingest_csv(Path::new(path))?;
    if dropped_rows > 0 {
        eprintln!("warning: dropped {dropped_rows} rows with missing values");
    }
    let input = InputSummary { rows_used: dataset.n_rows(), dropped_rows };
    let strata = match &config.stratify {
        None => vec![(None, dataset)],
        Some(by) => dataset.strata(by)?.into_iter().map(|(k, d)| (Some(k), d)).collect(),
    };
    Ok(Loaded { input, strata })
}

fn stamp(config: &AnalysisConfig) -> Option<u64> {
    if config.deterministic {
        None
    } else {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs())
    }
}

fn new_report(command: &str, config: &AnalysisConfig) -> Report {
    Report {
        report_version: REPORT_VERSION,
        command: command.to_string(),
        generated_at: stamp(config),
        config: config.clone(),
        input: None,
        notes: Vec::new(),
        strata: Vec::new(),
    }
}

/// Response and regressors: `outcome ~ exposure + proxy + controls`, or
/// `exposure ~ proxy + controls` when no outcome is named.
fn model_terms(config: &AnalysisConfig, data: &Dataset) -> Result<(String, Vec<String>)> {
    let mut labels = Vec::new();
    let response = match (&config.outcome, &config.exposure) {
        (Some(y), e) => {
            labels.extend(e.iter().cloned());
            y.clone()
        }
        (None, Some(a)) => a.clone(),
        (None, None) => return Err(Error::invalid("--outcome or --exposure is required")),
    };
    labels.extend(config.proxy.iter().cloned());
    labels.extend(config.controls.iter().cloned());
    Ok((response, data.resolve(&labels)?))
}

fn exposure_model(config: &AnalysisConfig, data: &Dataset) -> Result<(OlsFit, String)> {
    let exposure = AnalysisConfig::require(&config.exposure, "exposure")?;
    let proxy = AnalysisConfig::require(&config.proxy, "proxy")?;
    let mut labels = vec![proxy.to_string()];
    labels.extend(config.controls.iter().cloned());
    let regressors = data.resolve(&labels)?;
    if regressors.first().map(String::as_str) != Some(proxy) {
        return Err(Error::invalid("--proxy must name a numeric column"));
    }
    Ok((fit_ols(data, exposure, &regressors, true)?, proxy.to_string()))
}

fn per_stratum(
    command: &str,
    config: &AnalysisConfig,
    mut block: impl FnMut(&Dataset) -> Result<StratumBlock>,
) -> Result<Report> {
    config.validate()?;
    let loaded = load(config)?;
    let mut report = new_report(command, config);
    report.input = Some(loaded.input);
    for (stratum, data) in &loaded.strata {
        let mut b = block(data)?;
        b.stratum = stratum.clone();
        b.n = data.n_rows();
        report.strata.push(b);
    }
    Ok(report)
}

pub fn cmd_fit(config: &AnalysisConfig) -> Result<Report> {
    per_stratum("fit", config, |data| {
        let (response, regressors) = model_terms(config, data)?;
        let fit = fit_ols(data, &response, &regressors, true)?;
        let vif = if regressors.len() >= 2 {
            let values = vif(data, &regressors)?;
            Some(
                regressors
                    .iter()
                    .zip(values)
                    .map(|(name, value)| NamedValue { name: name.clone(), value })
                    .collect(),
            )
        } else {
            None
        };
        Ok(StratumBlock { ols: Some(OlsSummary::from(&fit)), vif, ..Default::default() })
    })
}

pub fn cmd_logit(config: &AnalysisConfig) -> Result<Report> {
    let mut report = per_stratum("logit", config, |data| {
        let (response, regressors) = model_terms(config, data)?;
        let fit = fit_logit(data, &response, &regressors)?;
        if !fit.converged {
            return Err(Error::NotConverged { iterations: fit.iterations });
        }
        let c = c_statistic(&fit, data.column(&response)?)?;
        Ok(StratumBlock { logit: Some(LogitSummary::new(&fit, c)), ..Default::default() })
    })?;
    report.notes.push("C-statistic is computed in-sample".to_string());
    Ok(report)
}

pub fn cmd_sensitivity(config: &AnalysisConfig) -> Result<Report> {
    if let Some(t) = config.t_value {
        config.validate()?;
        if config.input.is_some() {
            return Err(Error::invalid("--t cannot be combined with --input"));
        }
        let df = config.df.ok_or_else(|| Error::invalid("--df is required with --t"))?;
        let mut ts = TreatmentSummary::new(t, df)?;
        if let (Some(e), Some(se)) = (config.estimate, config.std_error) {
            ts = ts.with_estimate(e, se)?;
        }
        let statistics = sensitivity_report(&ts, config.q, config.alpha)?;
        let treatment = config.exposure.clone().unwrap_or_else(|| "treatment".to_string());
        let mut report = new_report("sensitivity", config);
        report.strata.push(StratumBlock {
            sensitivity: Some(SensitivityBlock { treatment, summary: ts, statistics }),
            ..Default::default()
        });
        return Ok(report);
    }
    if config.df.is_some() {
        return Err(Error::invalid("--df requires --t"));
    }
    per_stratum("sensitivity", config, |data| {
        AnalysisConfig::require(&config.outcome, "outcome")?;
        let treatment = AnalysisConfig::require(&config.exposure, "exposure")?;
        let (response, regressors) = model_terms(config, data)?;
        let fit = fit_ols(data, &response, &regressors, true)?;
        let ts = TreatmentSummary::from_fit(&fit, treatment)?;
        let statistics = sensitivity_report(&ts, config.q, config.alpha)?;
        Ok(StratumBlock {
            ols: Some(OlsSummary::from(&fit)),
            sensitivity: Some(SensitivityBlock { treatment: treatment.to_string(), summary: ts, statistics }),
            ..Default::default()
        })
    })
}

pub fn cmd_bias_grid(config: &AnalysisConfig) -> Result<Report> {
    if config.preset.is_some() || config.spec.is_some() {
        config.validate()?;
        if config.input.is_some() {
            return Err(Error::invalid("--input cannot be combined with --preset or --spec"));
        }
        let exposure = population_moments(&config.dgp()?).exposure_stats()?;
        let mut report = new_report("bias-grid", config);
        report.notes.push("exposure model from population moments".to_string());
        report.strata.push(StratumBlock {
            exposure_model: Some(exposure),
            bias_grid: Some(bias_grid(&exposure, &config.gamma_grid, &config.var_eps_grid)?),
            ..Default::default()
        });
        return Ok(report);
    }
    per_stratum("bias-grid", config, |data| {
        let (fit, proxy) = exposure_model(config, data)?;
        let exposure = ExposureModelStats::from_fit(&fit, &proxy)?;
        Ok(StratumBlock {
            exposure_model: Some(exposure),
            bias_grid: Some(bias_grid(&exposure, &config.gamma_grid, &config.var_eps_grid)?),
            ..Default::default()
        })
    })
}

pub fn cmd_ratio_ci(config: &AnalysisConfig) -> Result<Report> {
    let mut report = per_stratum("ratio-ci", config, |data| {
        let (fit, proxy) = exposure_model(config, data)?;
        Ok(StratumBlock {
            exposure_model: Some(ExposureModelStats::from_fit(&fit, &proxy)?),
            ratio_interval: Some(ratio_interval_from_fit(&fit, &proxy, config.level)?),
            ols: Some(OlsSummary::from(&fit)),
            ..Default::default()
        })
    })?;
    report.notes.push(format!(
        "coefficient and residual-variance intervals each at level {}; joint level {} by Bonferroni",
        1.0 - (1.0 - config.level) / 2.0,
        config.level
    ));
    Ok(report)
}

fn worker_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&k| k > 0)
            .map(Some)
            .ok_or_else(|| Error::invalid(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
    }
}

/// Monte Carlo study; requires `config.replicates`.
pub fn cmd_simulate(config: &AnalysisConfig) -> Result<Report> {
    config.validate()?;
    let replicates = config
        .replicates
        .ok_or_else(|| Error::invalid("--replicates is required for a simulation report"))?;
    let spec = config.dgp()?;
    let rc = ReplicateConfig { q: config.q, alpha: config.alpha, workers: worker_count()? };
    let study = replicate_study_with(&spec, config.n, replicates, config.seed, &rc)?;
    let bias = if spec.a_on_eps_x == 0.0 { Some(population_decomposition(&spec)?) } else { None };
    let mut report = new_report("simulate", config);
    report.strata.push(StratumBlock {
        n: config.n,
        bias,
        simulation: Some(SimulationBlock {
            spec,
            moments: population_moments(&spec),
            population_bias: population_ols_bias(&spec)?,
            summary: study.summary,
        }),
        ..Default::default()
    });
    Ok(report)
}

/// One simulated dataset with columns `u`, `x`, `a`, `y`.
pub fn simulate_dataset(config: &AnalysisConfig) -> Result<Dataset> {
    generate(&config.dgp()?, config.n, config.seed)
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) | Error::UnknownColumn(_) | Error::Domain(_) => 1,
        Error::Parse { .. } | Error::EmptyAfterFiltering | Error::Json(_) | Error::Io(_) => 2,
        Error::NotConverged { .. } => 4,
        Error::RankDeficient { .. }
        | Error::InsufficientRows { .. }
        | Error::Separation { .. }
        | Error::NoVariation(_)
        | Error::DegenerateExposure { .. }
        | Error::Internal(_) => 3,
    }
}

fn bias_grid_csv(report: &Report) -> String {
    let stratified = report.strata.iter().any(|b| b.stratum.is_some());
    let mut out = String::from(if stratified { "stratum,gamma,var_eps_x,bias\n" } else { "gamma,var_eps_x,bias\n" });
    for b in &report.strata {
        for p in b.bias_grid.iter().flatten() {
            if let Some(s) = &b.stratum {
                out.push_str(s);
                out.push(',');
            }
            out.push_str(&format!("{:.5},{:.5},{:.5}\n", p.gamma, p.var_eps_x, p.bias));
        }
    }
    out
}

fn render(report: &Report, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => report.to_json(),
        OutputFormat::Text if report.command == "bias-grid" => bias_grid_csv(report),
        OutputFormat::Text => report.to_text(),
    }
}

fn write_output(config: &AnalysisConfig, bytes: &[u8]) -> Result<()> {
    match &config.output {
        Some(path) => std::fs::write(path, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn execute(name: &str, config: &AnalysisConfig) -> Result<()> {
    if name == "simulate" && config.replicates.is_none() {
        let data = simulate_dataset(config)?;
        let mut buf = Vec::new();
        data.write_csv(&mut buf)?;
        return write_output(config, &buf);
    }
    let report = match name {
        "fit" => cmd_fit(config)?,
        "logit" => cmd_logit(config)?,
        "sensitivity" => cmd_sensitivity(config)?,
        "bias-grid" => cmd_bias_grid(config)?,
        "ratio-ci" => cmd_ratio_ci(config)?,
        "simulate" => cmd_simulate(config)?,
        other => return Err(Error::Internal(format!("unhandled command {other}"))),
    };
    write_output(config, render(&report, config.format).as_bytes())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let name = cli.command.name();
    let config = cli.command.into_config();
    match execute(name, &config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
