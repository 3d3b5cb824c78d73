//! `cadrx` command line: each subcommand reads plain files and writes plain
//! files, so any stage can be inspected or swapped out.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cadrx_core::censoring::validate_imputation;
use cadrx_core::cohort::{
    generate_synthetic_cohort, load_cohort, read_oracle, write_cohort, write_oracle, Cohort, CsvSchema, LoggingPolicy,
    SyntheticOracle, TreatmentArm,
};
use cadrx_core::evaluation::evaluate;
use cadrx_core::pipeline::{prepare_cohort, stage_seed, PathsConfig, RunConfig, STAGE_VALIDATE};
use cadrx_core::prescriber::prescribe_cohort;
use cadrx_core::risk::{train_risk_models, RiskConfig};
use cadrx_core::store::{load_bank, save_bank};
use cadrx_core::tae_regression::train_bank;
use cadrx_core::{EvaluationReport, Method, Prescription, SplitFractions};
use cadrx_service::ServiceConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Prepared cohort written next to a trained bank.
pub const BANK_COHORT_FILE: &str = "cohort.csv";

#[derive(Debug, Parser)]
#[command(
    name = "cadrx",
    version,
    about = "Treatment recommendation for coronary artery disease cohorts"
)]
pub struct Cli {
    /// TOML file; values in it override command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output format for reports printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with a counterfactual oracle.
    Synth(SynthArgs),
    /// Split, fill missing features and impute censored outcomes.
    Impute(ImputeArgs),
    /// Train the method x arm regression bank.
    Train(TrainArgs),
    /// Recommend a treatment for every test patient.
    Prescribe(PrescribeArgs),
    /// Effectiveness, robustness, agreement and allocation reports.
    Evaluate(EvaluateArgs),
    /// Artificial-censoring check of the outcome imputation.
    ValidateCensoring(ValidateArgs),
    /// Ten-year adverse-event classifiers.
    Risk(RiskArgs),
    /// HTTP API over a trained bank.
    Serve(ServeArgs),
}

/// Settings shared by every stage of the pipeline.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// Global seed; every stochastic step derives its own stream from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Split fractions, `train,test` or `train,validation,test`.
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<f64>>,
    /// Neighbours for censored-outcome imputation.
    #[arg(long, conflicts_with = "k_grid")]
    pub k: Option<usize>,
    /// Choose k by cross-validation over this grid instead of fixing it.
    #[arg(long, value_delimiter = ',')]
    pub k_grid: Option<Vec<usize>>,
    /// Neighbours for missing-feature imputation.
    #[arg(long)]
    pub feature_k: Option<usize>,
    /// Learner families, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Minimum training patients per arm.
    #[arg(long)]
    pub min_arm_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Outcome noise, standard deviation in years.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub censoring_rate: Option<f64>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyKind>,
    /// Strength of the biased logging policy.
    #[arg(long)]
    pub strength: Option<f64>,
    /// Cohort CSV to write (`paths.data`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Oracle file (`paths.oracle`); defaults to `<out stem>.oracle.json`.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Uniform,
    Biased,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    /// Raw cohort CSV (`paths.data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Cohort CSV (`paths.data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Bank directory (`paths.bank`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct PrescribeArgs {
    /// Bank directory (`paths.bank`).
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Cohort to prescribe for (`paths.data`); defaults to the one saved with the bank.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Prescriptions JSON file (`paths.prescriptions`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Bank directory (`paths.bank`).
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Prescriptions JSON (`paths.prescriptions`).
    #[arg(long)]
    pub prescriptions: Option<PathBuf>,
    /// Prepared cohort (`paths.data`); defaults to the one saved with the bank.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Counterfactual oracle for synthetic cohorts (`paths.oracle`).
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Report JSON file (`paths.report`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Cohort CSV (`paths.data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Pairs CSV file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    /// Cohort CSV (`paths.data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub evaluation: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<String>,
    /// Allowed browser origin; repeatable.
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
}

/// Recursively lays `top` over `base`; tables merge, everything else replaces.
pub fn overlay(base: &mut serde_json::Value, top: serde_json::Value) {
    match (base, top) {
        (serde_json::Value::Object(b), serde_json::Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn read_config_file(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let value: serde_json::Value =
        toml::from_str(&text).with_context(|| format!("config {} is not valid TOML", path.display()))?;
    Ok(value)
}

/// Defaults, then flags, then the config file.
pub fn run_config(flags: RunConfig, file: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = file else {
        flags.validate()?;
        return Ok(flags);
    };
    let mut file_value = read_config_file(path)?;
    if let serde_json::Value::Object(map) = &mut file_value {
        map.remove("service");
    }
    let mut merged = serde_json::to_value(&flags)?;
    overlay(&mut merged, file_value);
    let config: RunConfig =
        serde_json::from_value(merged).with_context(|| format!("invalid settings in {}", path.display()))?;
    config
        .validate()
        .with_context(|| format!("invalid settings in {}", path.display()))?;
    Ok(config)
}

fn service_config(flags: ServiceConfig, file: Option<&Path>) -> Result<ServiceConfig> {
    let Some(path) = file else { return Ok(flags) };
    let section = match read_config_file(path)? {
        serde_json::Value::Object(mut map) => map.remove("service"),
        _ => None,
    };
    let mut merged = serde_json::to_value(&flags)?;
    if let Some(s) = section {
        overlay(&mut merged, s);
    }
    serde_json::from_value(merged).with_context(|| format!("invalid [service] settings in {}", path.display()))
}

impl PipelineArgs {
    pub fn apply(&self, mut c: RunConfig) -> Result<RunConfig> {
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(f) = &self.split {
            c.split = SplitFractions::from_slice(f)?;
        }
        if let Some(k) = self.k {
            c.censoring.k = Some(k);
        }
        if let Some(g) = &self.k_grid {
            c.censoring.k = None;
            c.censoring.k_grid = g.clone();
        }
        if let Some(k) = self.feature_k {
            c.feature_k = k;
        }
        if let Some(m) = &self.methods {
            c.methods = m.clone();
        }
        if let Some(m) = self.min_arm_size {
            c.min_arm_size = m;
        }
        Ok(c)
    }
}

fn required(path: Option<PathBuf>, flag: &str, key: &str) -> Result<PathBuf> {
    path.with_context(|| format!("missing input: pass --{flag} or set `paths.{key}` in the config file"))
}

fn with_paths(mut c: RunConfig, paths: PathsConfig) -> RunConfig {
    c.paths = paths;
    c
}

pub fn read_cohort(path: &Path) -> Result<Cohort> {
    let report = load_cohort(path, &CsvSchema::default())?;
    for w in &report.warnings {
        log::warn!("{}: {w}", path.display());
    }
    if !report.row_errors.is_empty() {
        let mut msg = format!("{} invalid rows in {}:", report.row_errors.len(), path.display());
        for e in report.row_errors.iter().take(10) {
            let _ = write!(msg, "\n  line {}: {}", e.line, e.message);
        }
        bail!(msg);
    }
    if report.cohort.is_empty() {
        bail!("{} has no records", path.display());
    }
    Ok(report.cohort)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let body = serde_json::to_string_pretty(value)?;
    fs::write(path, body + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let body = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&body).with_context(|| format!("{} is not a valid file of the expected kind", path.display()))
}

fn is_prepared(c: &Cohort) -> bool {
    c.records.iter().all(|r| r.split.is_some() && r.outcome.is_known())
}

/// Loads `data` (or the bank's saved cohort) and prepares it if needed.
fn cohort_for_bank(bank: &Path, data: Option<&Path>, config: &RunConfig) -> Result<Cohort> {
    let path = data
        .map(Path::to_path_buf)
        .unwrap_or_else(|| bank.join(BANK_COHORT_FILE));
    let c = read_cohort(&path)?;
    Ok(if is_prepared(&c) {
        c
    } else {
        prepare_cohort(&c, config)?.0
    })
}

pub fn default_oracle_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or("cohort".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.oracle.json"))
}

fn print_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn arm_counts(c: &Cohort) -> [usize; 5] {
    let mut n = [0; 5];
    for r in &c.records {
        n[r.treatment.index()] += 1;
    }
    n
}

fn prescriptions_text(rx: &[Prescription]) -> String {
    let mut s = format!("{:<12}{:<10}{:>12}{:>6}\n", "patient", "arm", "TAE (yrs)", "DMLA");
    for p in rx {
        let _ = writeln!(
            s,
            "{:<12}{:<10}{:>12.2}{:>6}",
            p.patient_id,
            p.recommendation.label(),
            p.expected_tae_years,
            p.dmla
        );
    }
    s
}

fn prescriptions_csv(rx: &[Prescription]) -> String {
    let mut s = String::from("patient_id,recommendation,expected_tae_years,dmla");
    if let Some(p) = rx.first() {
        for e in &p.per_model_estimates {
            for a in TreatmentArm::ALL {
                let _ = write!(s, ",{}_{}", e.method.label(), a.label());
            }
        }
    }
    s.push('\n');
    for p in rx {
        let _ = write!(
            s,
            "{},{},{},{}",
            p.patient_id,
            p.recommendation.label(),
            p.expected_tae_years,
            p.dmla
        );
        for e in &p.per_model_estimates {
            for a in TreatmentArm::ALL {
                let _ = write!(s, ",{}", e.estimates[a]);
            }
        }
        s.push('\n');
    }
    s
}

fn report_out(out: &mut dyn Write, format: Format, report: &EvaluationReport) -> Result<()> {
    match format {
        Format::Text => write!(out, "{}", report.to_text())?,
        Format::Json => print_json(out, report)?,
        Format::Csv => write!(
            out,
            "{}\n{}\n{}",
            report.pr_csv(),
            report.dmla_csv(),
            report.allocation_csv()
        )?,
    }
    Ok(())
}

/// Runs one parsed command, writing reports to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = cli.config.as_deref();
    match &cli.command {
        Command::Synth(a) => {
            let mut base = RunConfig::default();
            let s = &mut base.synth;
            if let Some(v) = a.n {
                s.n = v;
            }
            if let Some(v) = a.seed {
                s.seed = v;
            }
            if let Some(v) = a.noise {
                s.noise_level = v;
            }
            if let Some(v) = a.censoring_rate {
                s.censoring_rate = v;
            }
            if let Some(v) = a.missing_rate {
                s.missing_rate = v;
            }
            match (a.policy, a.strength) {
                (Some(PolicyKind::Uniform), _) => s.logging_policy = LoggingPolicy::Uniform,
                (Some(PolicyKind::Biased), st) | (None, st @ Some(_)) => {
                    s.logging_policy = LoggingPolicy::Biased {
                        strength: st.unwrap_or(1.0),
                    }
                }
                (None, None) => {}
            }
            base.paths = PathsConfig {
                data: a.out.clone(),
                oracle: a.oracle.clone(),
                ..PathsConfig::default()
            };
            let config = run_config(base, cfg)?;
            let data = required(config.paths.data, "out", "data")?;
            let (cohort, oracle) = generate_synthetic_cohort(&config.synth)?;
            write_cohort(&cohort, &data)?;
            let oracle_path = config.paths.oracle.unwrap_or_else(|| default_oracle_path(&data));
            write_oracle(&oracle, &oracle_path)?;
            let censored = cohort.records.iter().filter(|r| r.outcome.censored).count();
            match cli.format {
                Format::Json => print_json(
                    out,
                    &serde_json::json!({
                        "n": cohort.len(), "censored": censored, "arms": arm_counts(&cohort),
                        "cohort": data, "oracle": oracle_path, "logging_policy": oracle.logging_policy,
                    }),
                )?,
                _ => writeln!(
                    out,
                    "wrote {} patients ({censored} censored) to {}; oracle {}\narms {:?}",
                    cohort.len(),
                    data.display(),
                    oracle_path.display(),
                    arm_counts(&cohort)
                )?,
            }
        }
        Command::Impute(a) => {
            let paths = PathsConfig {
                data: a.data.clone(),
                ..PathsConfig::default()
            };
            let config = run_config(with_paths(a.pipeline.apply(RunConfig::default())?, paths), cfg)?;
            let cohort = read_cohort(&required(config.paths.data.clone(), "data", "data")?)?;
            let (prepared, k) = prepare_cohort(&cohort, &config)?;
            write_cohort(&prepared, &a.out)?;
            let imputed = prepared.records.iter().filter(|r| r.outcome.imputed).count();
            writeln!(
                out,
                "k = {k}; imputed {imputed} censored outcomes; wrote {}",
                a.out.display()
            )?;
        }
        Command::Train(a) => {
            let paths = PathsConfig {
                data: a.data.clone(),
                bank: a.out.clone(),
                ..PathsConfig::default()
            };
            let config = run_config(with_paths(a.pipeline.apply(RunConfig::default())?, paths), cfg)?;
            let cohort = read_cohort(&required(config.paths.data.clone(), "data", "data")?)?;
            let dir = required(config.paths.bank.clone(), "out", "bank")?;
            let prepared = if is_prepared(&cohort) {
                cohort
            } else {
                prepare_cohort(&cohort, &config)?.0
            };
            let bank_config = config.bank_config();
            let bank = train_bank(&prepared, &bank_config)?;
            let manifest = save_bank(&bank, &bank_config, &dir)?;
            write_cohort(&prepared, dir.join(BANK_COHORT_FILE))?;
            match cli.format {
                Format::Json => print_json(out, &manifest)?,
                _ => {
                    let mut s = format!("{:<20}", "R² (test)");
                    for arm in TreatmentArm::ALL {
                        let _ = write!(s, "{:>9}", arm.label());
                    }
                    s.push('\n');
                    for (m, row) in bank.methods.iter().zip(bank.r2_table()) {
                        let _ = write!(s, "{:<20}", m.label());
                        for v in row {
                            let _ = write!(s, "{:>9.4}", v);
                        }
                        s.push('\n');
                    }
                    writeln!(out, "{s}wrote bank to {}", dir.display())?;
                }
            }
        }
        Command::Prescribe(a) => {
            let paths = PathsConfig {
                data: a.data.clone(),
                bank: a.bank.clone(),
                prescriptions: a.out.clone(),
                ..PathsConfig::default()
            };
            let config = run_config(with_paths(a.pipeline.apply(RunConfig::default())?, paths), cfg)?;
            let dir = required(config.paths.bank.clone(), "bank", "bank")?;
            let (bank, _) = load_bank(&dir)?;
            let cohort = cohort_for_bank(&dir, config.paths.data.as_deref(), &config)?;
            let rx = prescribe_cohort(&cohort, &bank)?;
            if let Some(p) = &config.paths.prescriptions {
                write_json(p, &rx)?;
            }
            match cli.format {
                Format::Text => write!(out, "{}", prescriptions_text(&rx))?,
                Format::Json => print_json(out, &rx)?,
                Format::Csv => write!(out, "{}", prescriptions_csv(&rx))?,
            }
        }
        Command::Evaluate(a) => {
            let paths = PathsConfig {
                data: a.data.clone(),
                oracle: a.oracle.clone(),
                bank: a.bank.clone(),
                prescriptions: a.prescriptions.clone(),
                report: a.out.clone(),
            };
            let config = run_config(with_paths(a.pipeline.apply(RunConfig::default())?, paths), cfg)?;
            let dir = required(config.paths.bank.clone(), "bank", "bank")?;
            let cohort = cohort_for_bank(&dir, config.paths.data.as_deref(), &config)?;
            let rx: Vec<Prescription> = read_json(&required(
                config.paths.prescriptions.clone(),
                "prescriptions",
                "prescriptions",
            )?)?;
            let oracle: Option<SyntheticOracle> = config.paths.oracle.as_deref().map(read_oracle).transpose()?;
            let report = evaluate(&cohort, &rx, oracle.as_ref())?;
            if let Some(p) = &config.paths.report {
                write_json(p, &report)?;
            }
            report_out(out, cli.format, &report)?;
        }
        Command::ValidateCensoring(a) => {
            let paths = PathsConfig {
                data: a.data.clone(),
                ..PathsConfig::default()
            };
            let config = run_config(with_paths(a.pipeline.apply(RunConfig::default())?, paths), cfg)?;
            let cohort = read_cohort(&required(config.paths.data.clone(), "data", "data")?)?;
            let k = config.censoring.k.unwrap_or(cadrx_core::censoring::DEFAULT_K);
            let report = validate_imputation(&cohort, k, stage_seed(config.seed, STAGE_VALIDATE))?;
            if let Some(p) = &a.out {
                fs::write(p, report.to_csv()).with_context(|| format!("cannot write {}", p.display()))?;
            }
            match cli.format {
                Format::Json => print_json(out, &report)?,
                Format::Text => {
                    writeln!(
                        out,
                        "k = {}; R² = {:.4} over {} records ({} skipped)",
                        report.k,
                        report.r2,
                        report.pairs.len(),
                        report.skipped
                    )?;
                    if a.out.is_none() {
                        write!(out, "{}", report.to_csv())?;
                    }
                }
                Format::Csv => write!(out, "{}", report.to_csv())?,
            }
        }
        Command::Risk(a) => {
            let paths = PathsConfig {
                data: a.data.clone(),
                ..PathsConfig::default()
            };
            let config = run_config(with_paths(a.pipeline.apply(RunConfig::default())?, paths), cfg)?;
            let data = required(config.paths.data.clone(), "data", "data")?;
            let cohort = read_cohort(&data)?;
            let prepared = if is_prepared(&cohort) {
                cohort
            } else {
                prepare_cohort(&cohort, &config)?.0
            };
            let risk = train_risk_models(
                &prepared,
                &RiskConfig {
                    methods: config.methods.clone(),
                    learners: config.learners.clone(),
                    seed: config.seed,
                },
            )
            .with_context(|| {
                format!(
                    "cannot train risk models on {}; the training split needs patients with and without an event inside ten years",
                    data.display()
                )
            })?;
            match cli.format {
                Format::Text => write!(out, "{}", risk.report.to_text())?,
                Format::Json => print_json(out, &risk.report)?,
                Format::Csv => write!(out, "{}", risk.report.to_csv())?,
            }
        }
        Command::Serve(a) => {
            let mut flags = ServiceConfig {
                bank_dir: a.bank.clone(),
                evaluation_path: a.evaluation.clone(),
                cors_origins: a.cors_origins.clone(),
                ..ServiceConfig::default()
            };
            if let Some(b) = &a.bind {
                flags.bind = b.clone();
            }
            let config = service_config(flags, cfg)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(cadrx_service::serve(&config))?;
        }
    }
    Ok(())
}
