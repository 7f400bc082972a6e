//! Batch front end: configuration loading, the `rate`, `optimize`, `scan`
//! and `verify` subcommands, and table/CSV/JSON output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::channel::ChannelParams;
use crate::decoy::IntensityProfile;
use crate::error::{Error, Result};
use crate::optimize::{optimize, OptimizationConfig};
use crate::oracles::{bound_validity_check, coverage_check};
use crate::rate::{key_rate, solve_security_fixed_point, KeyRateReport};
use crate::SecurityBudget;

/// Published reference rates, shipped for side-by-side display.
pub const REFERENCE_RATES: &str = include_str!("../data/reference_rates.csv");

#[derive(Debug, Parser)]
#[command(name = "finite-decoy", version, about = "Finite-key decoy-state BB84 key rates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the key rate at explicit parameters.
    Rate(RateArgs),
    /// Optimize a single (k, s_X) cell.
    Optimize(OptimizeArgs),
    /// Optimize every cell of a (k, s_X) grid.
    Scan(ScanArgs),
    /// Run the bound-validity and coverage oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Write output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Raw key length.
    #[arg(long)]
    pub sx: f64,
    /// Probability of the X basis.
    #[arg(long)]
    pub px: f64,
    /// Intensities, largest first.
    #[arg(long, value_delimiter = ',', required = true)]
    pub mu: Vec<f64>,
    /// Intensity probabilities, same order as `--mu`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub pmu: Vec<f64>,
    /// Fix the secrecy parameter instead of solving `eps_sec = kappa * l_final`.
    #[arg(long)]
    pub eps_sec: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// Raw key length.
    #[arg(long)]
    pub sx: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Intensity counts to scan.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Raw key lengths to scan.
    #[arg(long, value_delimiter = ',')]
    pub sx: Option<Vec<f64>>,
    /// Add the published reference rates to table output.
    #[arg(long)]
    pub reference: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Trials per bound-validity run.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Trials for the coverage run.
    #[arg(long, default_value_t = 10_000)]
    pub coverage_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Table,
    Csv,
    Json,
}

/// Everything a batch run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub channel: ChannelParams,
    pub kappa: f64,
    pub eps_cor: f64,
    pub grid_k: Vec<usize>,
    /// Base-10 exponents of the raw key lengths.
    pub grid_sx: Vec<f64>,
    /// `k` and `s_x` are overwritten per grid cell.
    pub optimizer: OptimizationConfig,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            channel: ChannelParams::default(),
            kappa: 1e-15,
            eps_cor: 1e-15,
            grid_k: vec![3, 4, 5, 6],
            grid_sx: (5..=11).map(f64::from).collect(),
            optimizer: OptimizationConfig::default(),
            output_format: OutputFormat::Table,
            output_path: None,
        }
    }
}

impl RunConfig {
    /// Defaults overridden by the keys of a flat JSON document such as
    /// `{"channel.p_dc": 6e-7, "grid.k": [3, 4]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let map: Map<String, Value> =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
        let mut config = Self::default();
        for (key, value) in &map {
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn set(&mut self, key: &str, value: &Value) -> Result<()> {
        let number = || {
            value
                .as_f64()
                .ok_or_else(|| Error::Config(format!("field `{key}`: expected a number, got {value}")))
        };
        let count = || {
            value.as_u64().map(|v| v as usize).ok_or_else(|| {
                Error::Config(format!("field `{key}`: expected a non-negative integer, got {value}"))
            })
        };
        let list = || -> Result<Vec<f64>> {
            value
                .as_array()
                .and_then(|items| items.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
                .ok_or_else(|| Error::Config(format!("field `{key}`: expected a list of numbers, got {value}")))
        };
        match key {
            "channel.p_ap" => self.channel.p_ap = number()?,
            "channel.p_dc" => self.channel.p_dc = number()?,
            "channel.e_mis" => self.channel.e_mis = number()?,
            "channel.eta_ch" => self.channel.eta_ch = number()?,
            "channel.eta_sys" => self.channel.eta_sys = number()?,
            "security.kappa" => self.kappa = number()?,
            "security.eps_cor" => self.eps_cor = number()?,
            "grid.k" => {
                self.grid_k = list()?
                    .into_iter()
                    .map(|v| {
                        if v.fract() == 0.0 && v >= 0.0 {
                            Ok(v as usize)
                        } else {
                            Err(Error::Config(format!("field `{key}`: {v} is not an integer")))
                        }
                    })
                    .collect::<Result<_>>()?
            }
            "grid.sx_exponents" => self.grid_sx = list()?,
            "optimizer.restarts" => self.optimizer.restarts = count()?,
            "optimizer.seed" => {
                self.optimizer.seed = value.as_u64().ok_or_else(|| {
                    Error::Config(format!("field `{key}`: expected a non-negative integer, got {value}"))
                })?
            }
            "optimizer.spacing_min" => self.optimizer.spacing_min = number()?,
            "optimizer.mu_min" => self.optimizer.mu_min = number()?,
            "optimizer.tolerance" => self.optimizer.tolerance = number()?,
            "optimizer.vacuum_gap_min" => self.optimizer.vacuum_gap_min = number()?,
            "optimizer.mu_max" => self.optimizer.mu_max = number()?,
            "optimizer.max_evals" => self.optimizer.max_evals = count()?,
            "output.format" => {
                self.output_format = serde_json::from_value(value.clone())
                    .map_err(|_| Error::Config(format!("field `{key}`: expected table, csv or json")))?
            }
            "output.path" => {
                self.output_path = Some(PathBuf::from(value.as_str().ok_or_else(|| {
                    Error::Config(format!("field `{key}`: expected a path string"))
                })?))
            }
            _ => return Err(Error::Config(format!("unknown field `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.grid_k.is_empty() || self.grid_sx.is_empty() {
            return Err(Error::Config("grid.k and grid.sx_exponents must be non-empty".into()));
        }
        for (name, v) in [("security.kappa", self.kappa), ("security.eps_cor", self.eps_cor)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("field `{name}`: {v} outside (0, 1)")));
            }
        }
        for &k in &self.grid_k {
            for &e in &self.grid_sx {
                self.cell_config(k, e).validate()?;
            }
        }
        Ok(())
    }

    fn apply(&mut self, common: &CommonArgs) {
        if let Some(seed) = common.seed {
            self.optimizer.seed = seed;
        }
        if let Some(restarts) = common.restarts {
            self.optimizer.restarts = restarts;
        }
        if let Some(format) = common.format {
            self.output_format = format;
        }
        if let Some(out) = &common.out {
            self.output_path = Some(out.clone());
        }
    }

    fn cell_config(&self, k: usize, sx_exponent: f64) -> OptimizationConfig {
        OptimizationConfig { k, s_x: 10f64.powf(sx_exponent), ..self.optimizer.clone() }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(common);
    Ok(config)
}

/// One optimized grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub k: usize,
    pub s_x: f64,
    pub rate: f64,
    /// `rate * 1e5`.
    pub rate_e5: f64,
    pub p_x: f64,
    pub mu: Vec<f64>,
    pub p_mu: Vec<f64>,
    pub eps_sec: f64,
    pub l_final: f64,
    pub feasible: bool,
    pub converged: bool,
    pub vacuous_gamma: bool,
}

pub const CSV_HEADER: &str =
    "k,s_x,rate,rate_e5,p_x,mu,p_mu,eps_sec,l_final,feasible,converged,vacuous_gamma";

impl ScanRow {
    fn new(k: usize, s_x: f64, result: &crate::OptimizationResult) -> Self {
        let report = &result.best_report;
        Self {
            k,
            s_x,
            rate: report.rate,
            rate_e5: report.rate * 1e5,
            p_x: result.best_p_x,
            mu: result.best_mu.clone(),
            p_mu: result.best_p_mu.clone(),
            eps_sec: report.eps_sec,
            l_final: report.l_final,
            feasible: report.feasible,
            converged: result.converged,
            vacuous_gamma: report.vacuous_gamma,
        }
    }

    /// CSV line at full precision; vectors are `;`-separated.
    pub fn to_csv(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";");
        format!(
            "{},{:e},{:e},{:e},{:e},{},{},{:e},{:e},{},{},{}",
            self.k,
            self.s_x,
            self.rate,
            self.rate_e5,
            self.p_x,
            join(&self.mu),
            join(&self.p_mu),
            self.eps_sec,
            self.l_final,
            self.feasible,
            self.converged,
            self.vacuous_gamma
        )
    }

    /// Inverse of [`ScanRow::to_csv`].
    pub fn from_csv(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 12 {
            return Err(Error::Config(format!("expected 12 CSV fields, got {}", fields.len())));
        }
        let bad = |name: &str| Error::Config(format!("CSV field `{name}` is malformed"));
        let num = |i: usize, name: &str| fields[i].parse::<f64>().map_err(|_| bad(name));
        let vec = |i: usize, name: &str| -> Result<Vec<f64>> {
            fields[i].split(';').map(|s| s.parse::<f64>().map_err(|_| bad(name))).collect()
        };
        let flag = |i: usize, name: &str| fields[i].parse::<bool>().map_err(|_| bad(name));
        Ok(Self {
            k: fields[0].parse().map_err(|_| bad("k"))?,
            s_x: num(1, "s_x")?,
            rate: num(2, "rate")?,
            rate_e5: num(3, "rate_e5")?,
            p_x: num(4, "p_x")?,
            mu: vec(5, "mu")?,
            p_mu: vec(6, "p_mu")?,
            eps_sec: num(7, "eps_sec")?,
            l_final: num(8, "l_final")?,
            feasible: flag(9, "feasible")?,
            converged: flag(10, "converged")?,
            vacuous_gamma: flag(11, "vacuous_gamma")?,
        })
    }
}

/// Optimizes every `(k, s_X)` cell. Rows come back ordered by `k`, then
/// `s_X`, whatever order the cells finish in.
pub fn run_scan(config: &RunConfig) -> Result<Vec<ScanRow>> {
    config.validate()?;
    let mut cells: Vec<(usize, f64)> = config
        .grid_k
        .iter()
        .flat_map(|&k| config.grid_sx.iter().map(move |&e| (k, e)))
        .collect();
    cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    cells
        .par_iter()
        .map(|&(k, exponent)| {
            let cell = config.cell_config(k, exponent);
            let result = optimize(&config.channel, &cell, config.kappa, config.eps_cor)?;
            Ok(ScanRow::new(k, cell.s_x, &result))
        })
        .collect()
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    out
}

/// Published rates keyed by `(k, s_X exponent)`: `(r_prior, r)` in units of
/// `1e-5`.
pub fn reference_rates() -> Vec<(usize, i32, f64, f64)> {
    REFERENCE_RATES
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('k'))
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?, f[3].parse().ok()?))
        })
        .collect()
}

/// Rows of `s_X`, one `R_-5` column per `k`, optionally next to the
/// published values.
pub fn scan_table(rows: &[ScanRow], reference: bool) -> String {
    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    ks.dedup();
    let mut sxs: Vec<f64> = rows.iter().map(|r| r.s_x).collect();
    sxs.sort_by(f64::total_cmp);
    sxs.dedup();
    let published = reference_rates();
    let lookup = |k: usize, s_x: f64| {
        let exponent = s_x.log10().round() as i32;
        published.iter().find(|r| r.0 == k && r.1 == exponent && (10f64.powi(exponent) - s_x).abs() < 0.5)
    };

    let mut out = String::new();
    let _ = write!(out, "{:>12}", "s_X");
    for k in &ks {
        let _ = write!(out, " {:>12}", format!("k={k} R_-5"));
        if reference {
            let _ = write!(out, " {:>10} {:>10}", "pub R'_-5", "pub R_-5");
        }
    }
    out.push('\n');
    for &s_x in &sxs {
        let _ = write!(out, "{s_x:>12.5e}");
        for &k in &ks {
            match rows.iter().find(|r| r.k == k && r.s_x == s_x) {
                Some(row) => {
                    let _ = write!(out, " {:>12.5e}", row.rate_e5);
                }
                None => {
                    let _ = write!(out, " {:>12}", "-");
                }
            }
            if reference {
                match lookup(k, s_x) {
                    Some(r) => {
                        let _ = write!(out, " {:>10.3} {:>10.3}", r.2, r.3);
                    }
                    None => {
                        let _ = write!(out, " {:>10} {:>10}", "-", "-");
                    }
                }
            }
        }
        out.push('\n');
    }
    if reference {
        out.push_str("pub columns: published reference values, not computed\n");
    }
    out
}

fn report_table(report: &KeyRateReport) -> String {
    let mut out = String::new();
    let rows = [
        ("rate", report.rate),
        ("raw_rate", report.raw_rate),
        ("l_final", report.l_final),
        ("eps_sec", report.eps_sec),
        ("eps_cor", report.eps_cor),
        ("e_p", report.e_p),
        ("e_z1", report.e_z1),
        ("y_z1_lower", report.y_z1_lower),
        ("y_x1_lower", report.y_x1_lower),
        ("lambda_ec", report.lambda_ec),
        ("deviation_x", report.deviation_x),
        ("s_z", report.s_z),
    ];
    for (name, v) in rows {
        let _ = writeln!(out, "{name:<12} {v:.5e}");
    }
    let _ = writeln!(out, "{:<12} {}", "feasible", report.feasible);
    let _ = writeln!(out, "{:<12} {}", "iterations", report.iterations);
    out
}

fn report_csv(report: &KeyRateReport) -> String {
    format!(
        "rate,raw_rate,l_final,eps_sec,eps_cor,e_p,e_z1,y_z1_lower,y_x1_lower,lambda_ec,deviation_x,s_z,feasible,iterations\n\
         {:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}\n",
        report.rate,
        report.raw_rate,
        report.l_final,
        report.eps_sec,
        report.eps_cor,
        report.e_p,
        report.e_z1,
        report.y_z1_lower,
        report.y_x1_lower,
        report.lambda_ec,
        report.deviation_x,
        report.s_z,
        report.feasible,
        report.iterations
    )
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Io(e.to_string()))
}

fn emit(config: &RunConfig, text: &str) -> Result<()> {
    match &config.output_path {
        Some(path) => std::fs::write(path, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Outcome of a subcommand that completed without a configuration error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerificationFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::VerificationFailed => 1,
        }
    }
}

/// Exit code for any error: bad configuration, flags or parameters.
pub const ERROR_EXIT_CODE: u8 = 2;

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Rate(args) => run_rate(&args),
        Command::Optimize(args) => run_optimize(&args),
        Command::Scan(args) => {
            let mut config = load_config(&args.common)?;
            if let Some(k) = &args.k {
                config.grid_k = k.clone();
            }
            if let Some(sx) = &args.sx {
                config.grid_sx = sx.iter().map(|s| s.log10()).collect();
            }
            let rows = run_scan(&config)?;
            let text = match config.output_format {
                OutputFormat::Table => scan_table(&rows, args.reference),
                OutputFormat::Csv => scan_csv(&rows),
                OutputFormat::Json => to_json(&rows)?,
            };
            emit(&config, &text)?;
            Ok(Outcome::Success)
        }
        Command::Verify(args) => run_verify(&args),
    }
}

fn run_rate(args: &RateArgs) -> Result<Outcome> {
    let config = load_config(&args.common)?;
    let profile = IntensityProfile::new(args.mu.clone(), args.pmu.clone())?;
    let observed = config.channel.observe(&profile)?;
    let report = match args.eps_sec {
        Some(eps_sec) => {
            let budget = SecurityBudget::new(eps_sec, config.eps_cor)?;
            key_rate(&profile, &observed, args.px, args.sx, &budget)?
        }
        None => solve_security_fixed_point(&profile, &observed, args.px, args.sx, config.kappa, config.eps_cor)?,
    };
    let text = match config.output_format {
        OutputFormat::Table => report_table(&report),
        OutputFormat::Csv => report_csv(&report),
        OutputFormat::Json => to_json(&report)?,
    };
    emit(&config, &text)?;
    Ok(Outcome::Success)
}

fn run_optimize(args: &OptimizeArgs) -> Result<Outcome> {
    let config = load_config(&args.common)?;
    let k = args.k.unwrap_or(config.grid_k[0]);
    let s_x = args.sx.unwrap_or_else(|| 10f64.powf(config.grid_sx[0]));
    let cell = OptimizationConfig { k, s_x, ..config.optimizer.clone() };
    let result = optimize(&config.channel, &cell, config.kappa, config.eps_cor)?;
    let row = ScanRow::new(k, s_x, &result);
    let text = match config.output_format {
        OutputFormat::Table => {
            let mut out = String::new();
            let _ = writeln!(out, "k            {k}");
            let _ = writeln!(out, "s_X          {s_x:.5e}");
            let _ = writeln!(out, "R_-5         {:.5e}", row.rate_e5);
            let _ = writeln!(out, "p_X          {:.5e}", row.p_x);
            let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.5e}")).collect::<Vec<_>>().join(" ");
            let _ = writeln!(out, "mu           {}", fmt(&row.mu));
            let _ = writeln!(out, "p_mu         {}", fmt(&row.p_mu));
            let _ = writeln!(out, "converged    {}", row.converged);
            out + &report_table(&result.best_report)
        }
        OutputFormat::Csv => scan_csv(std::slice::from_ref(&row)),
        OutputFormat::Json => to_json(&result)?,
    };
    emit(&config, &text)?;
    Ok(Outcome::Success)
}

/// Results of the `verify` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifySummary {
    pub validity: Vec<crate::oracles::ValidityReport>,
    /// Literal two-intensity formulas; informational only.
    pub two_intensity: crate::oracles::ValidityReport,
    pub coverage: crate::oracles::CoverageReport,
    pub passed: bool,
}

pub fn verify(trials: usize, coverage_trials: usize, seed: u64) -> Result<VerifySummary> {
    let validity = [3, 5]
        .iter()
        .map(|&k| bound_validity_check(trials, k, seed))
        .collect::<Result<Vec<_>>>()?;
    let two_intensity = bound_validity_check(trials, 2, seed)?;
    let coverage = coverage_check(0.1, 1000, 3, coverage_trials, seed)?;
    let passed = validity.iter().all(|r| r.violations() == 0) && coverage.passed();
    Ok(VerifySummary { validity, two_intensity, coverage, passed })
}

fn run_verify(args: &VerifyArgs) -> Result<Outcome> {
    let config = load_config(&args.common)?;
    let summary = verify(args.trials, args.coverage_trials, config.optimizer.seed)?;
    let text = match config.output_format {
        OutputFormat::Json => to_json(&summary)?,
        _ => {
            let mut out = String::new();
            for r in &summary.validity {
                let _ = writeln!(
                    out,
                    "bounds k={} trials={} violations={} worst_excess={:.3e}",
                    r.k,
                    r.trials,
                    r.violations(),
                    r.worst_excess
                );
            }
            let t = &summary.two_intensity;
            let _ = writeln!(
                out,
                "bounds k=2 (literal, informational) trials={} violations={}",
                t.trials,
                t.violations()
            );
            let c = &summary.coverage;
            let _ = writeln!(
                out,
                "coverage eps={} s={} trials={} failure_rate={:.5e} allowed={:.5e}",
                c.eps,
                c.s,
                c.trials,
                c.failure_rate(),
                c.allowed_rate()
            );
            let _ = writeln!(out, "{}", if summary.passed { "PASS" } else { "FAIL" });
            out
        }
    };
    emit(&config, &text)?;
    Ok(if summary.passed { Outcome::Success } else { Outcome::VerificationFailed })
}
