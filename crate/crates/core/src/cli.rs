//! `bvfilter` command line: simulate, filter, compare, checks.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checks::{run_suite, Suite};
use crate::error::Error;
use crate::io::{
    compare_tables, kalman_table, observation_from_table, observation_table, particle_dump_table,
    particle_table, path_table, write_json, write_snapshot, zakai_table, CompareMetrics, Table,
};
use crate::oracle::kalman_run;
use crate::particle::{run_particle, ParticleOptions, DEFAULT_THRESHOLD};
use crate::scenario::{validate_scenario, Scenario};
use crate::simulate::{simulate_batch_with, simulate_bundle, Measure, ObservationPath};
use crate::zakai::{RunOptions, ZakaiSolver};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MISSING_INPUT: i32 = 2;
pub const EXIT_GRID_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "bvfilter",
    version,
    about = "Filtering for diffusions with a bounded-variation input"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample signal/observation paths and their Girsanov densities.
    Simulate(SimulateArgs),
    /// Run one filter on an observation path and write the estimate table.
    Filter(FilterArgs),
    /// Compare two estimate tables.
    Compare(CompareArgs),
    /// Run a built-in invariant suite.
    Checks(ChecksArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, env = "BVFILTER_OUT", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum, default_value_t = MeasureArg::Physical)]
    pub measure: MeasureArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MeasureArg {
    Physical,
    Reference,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Physical => Measure::Physical,
            MeasureArg::Reference => Measure::Reference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Zakai,
    Ks,
    Particle,
    Kalman,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Zakai => "zakai",
            Method::Ks => "ks",
            Method::Particle => "particle",
            Method::Kalman => "kalman",
        }
    }
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    pub scenario: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Observation CSV (columns `t`, `y_1..`).
    #[arg(
        long,
        conflicts_with = "generate",
        required_unless_present = "generate"
    )]
    pub obs: Option<PathBuf>,
    /// Simulate the observation from the scenario (also written as `observation.csv`).
    #[arg(long)]
    pub generate: bool,
    /// Replication index of the generated observation.
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Write a binary density snapshot every this many steps (grid methods).
    #[arg(long)]
    pub snapshots_every: Option<usize>,
    /// Write the particle cloud every this many steps.
    #[arg(long)]
    pub dump_particles: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long)]
    pub max_rmse_mean: Option<f64>,
    #[arg(long)]
    pub max_sup_mean: Option<f64>,
    #[arg(long)]
    pub max_time_avg_mean: Option<f64>,
    #[arg(long)]
    pub max_sup_cov: Option<f64>,
    #[arg(long)]
    pub max_log_mass: Option<f64>,
    /// Also write the report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChecksArgs {
    #[arg(long, value_enum)]
    pub suite: SuiteArg,
    /// Also write the report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SuiteArg {
    Eta,
    Mass,
    Mollify,
    Convergence,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Eta => Suite::Eta,
            SuiteArg::Mass => Suite::Mass,
            SuiteArg::Mollify => Suite::Mollify,
            SuiteArg::Convergence => Suite::Convergence,
        }
    }
}

/// Failure of a command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    MissingInput {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario failed validation:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error("{0}")]
    ChecksFailed(String),
    #[error(transparent)]
    Engine(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput { .. } => EXIT_MISSING_INPUT,
            CliError::Engine(Error::GridMismatch(_)) => EXIT_GRID_MISMATCH,
            _ => EXIT_FAILURE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => with_jobs(a.jobs, || cmd_simulate(&a)),
        Command::Filter(a) => with_jobs(a.jobs, || cmd_filter(&a)),
        Command::Compare(a) => cmd_compare(&a),
        Command::Checks(a) => with_jobs(a.jobs, || cmd_checks(&a)),
    }
}

fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> CliResult<T> + Send,
) -> CliResult<T> {
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {j} workers: {e}")))?
            .install(f),
        None => f(),
    }
}

fn read_input(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::MissingInput {
        path: path.to_path_buf(),
        source,
    })
}

/// Load and validate a scenario, applying a seed override.
pub fn load_scenario(path: &Path, seed: Option<u64>) -> CliResult<Scenario> {
    let mut s = Scenario::from_json(&read_input(path)?)?;
    if let Some(seed) = seed {
        s = s.with_seed(seed)?;
    }
    let report = validate_scenario(&s);
    if !report.passes() {
        return Err(CliError::Invalid(
            report
                .violations
                .iter()
                .map(|v| format!("  {}: {}", v.constraint, v.message))
                .collect(),
        ));
    }
    Ok(s)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let s = load_scenario(&a.scenario, a.seed)?;
    if a.paths == 0 {
        return Err(Error::InvalidArgument("--paths must be at least 1".into()).into());
    }
    let dir = &a.output.out;
    create_dir(dir)?;
    let width = (a.paths - 1).to_string().len().max(4);
    let summary = simulate_batch_with(&s, a.paths, a.measure.into(), |r, b| {
        path_table(b).write(&dir.join(format!("path_{r:0width$}.csv")))
    })?;
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "wrote {} path(s) and summary.json to {}",
        a.paths,
        dir.display()
    );
    Ok(())
}

fn observation_for(s: &Scenario, a: &FilterArgs) -> CliResult<ObservationPath> {
    match &a.obs {
        Some(path) => Ok(observation_from_table(&Table::from_csv(&read_input(
            path,
        )?)?)?),
        None => {
            let y = simulate_bundle(s, a.replication, Measure::Physical)?.observation;
            observation_table(&y).write(&a.output.out.join("observation.csv"))?;
            Ok(y)
        }
    }
}

pub fn cmd_filter(a: &FilterArgs) -> CliResult<()> {
    let s = load_scenario(&a.scenario, a.seed)?;
    let dir = &a.output.out;
    create_dir(dir)?;
    let y = observation_for(&s, a)?;
    let table = match a.method {
        Method::Zakai | Method::Ks => {
            let solver = ZakaiSolver::new(&s)?;
            let opts = RunOptions {
                snapshot_every: a.snapshots_every,
                skip_observation: false,
            };
            let run = if a.method == Method::Zakai {
                solver.run_zakai(&y, opts)?
            } else {
                solver.run_ks(&y, opts)?
            };
            for (k, p) in &run.snapshots {
                write_snapshot(
                    &dir.join(format!("snapshot_{}_{k:06}.bin", a.method.name())),
                    p,
                )?;
            }
            zakai_table(&run)
        }
        Method::Particle => {
            let opts = ParticleOptions {
                particles: a.particles,
                threshold: a.threshold,
                seed: s.seed(),
                replication: a.replication,
                dump_every: a.dump_particles,
            };
            let run = run_particle(&s, &y, opts)?;
            if a.dump_particles.is_some() {
                particle_dump_table(&run.dumps).write(&dir.join("particles.csv"))?;
            }
            particle_table(&run)
        }
        Method::Kalman => kalman_table(&kalman_run(&s, &y)?),
    };
    let path = dir.join(format!("estimate_{}.csv", a.method.name()));
    table.write(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Metrics of `compare` and the verdict against the requested thresholds.
#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    #[serde(flatten)]
    pub metrics: CompareMetrics,
    pub failed: Vec<String>,
    pub pass: bool,
}

pub fn compare_report(a: &CompareArgs, metrics: CompareMetrics) -> CompareReport {
    let limits = [
        ("rmse_mean", metrics.rmse_mean, a.max_rmse_mean),
        ("sup_mean_error", metrics.sup_mean_error, a.max_sup_mean),
        (
            "time_avg_mean_error",
            metrics.time_avg_mean_error,
            a.max_time_avg_mean,
        ),
        ("sup_cov_error", metrics.sup_cov_error, a.max_sup_cov),
        (
            "sup_log_mass_error",
            metrics.sup_log_mass_error,
            a.max_log_mass,
        ),
    ];
    let failed: Vec<String> = limits
        .iter()
        .filter_map(|(name, value, limit)| {
            limit
                .filter(|l| !(value <= l))
                .map(|l| format!("{name} = {value} > {l}"))
        })
        .collect();
    CompareReport {
        metrics,
        pass: failed.is_empty(),
        failed,
    }
}

pub fn cmd_compare(a: &CompareArgs) -> CliResult<()> {
    let ta = Table::from_csv(&read_input(&a.a)?)?;
    let tb = Table::from_csv(&read_input(&a.b)?)?;
    let report = compare_report(a, compare_tables(&ta, &tb)?);
    emit(&report, a.report.as_deref())?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(format!(
            "thresholds exceeded: {}",
            report.failed.join(", ")
        )))
    }
}

pub fn cmd_checks(a: &ChecksArgs) -> CliResult<()> {
    let results = run_suite(a.suite.into())?;
    emit(&results, a.report.as_deref())?;
    let failed: Vec<&str> = results
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.check.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(format!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}

fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult<()> {
    println!(
        "{}",
        serde_json::to_string_pretty(value).map_err(Error::from)?
    );
    if let Some(path) = path {
        write_json(path, value)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        let missing = CliError::MissingInput {
            path: "x".into(),
            source: std::io::ErrorKind::NotFound.into(),
        };
        assert_eq!(missing.exit_code(), EXIT_MISSING_INPUT);
        assert_eq!(
            CliError::from(Error::GridMismatch("t".into())).exit_code(),
            EXIT_GRID_MISMATCH
        );
        assert_eq!(CliError::Invalid(vec![]).exit_code(), EXIT_FAILURE);
        assert_eq!(
            CliError::from(Error::NotLinearGaussian).exit_code(),
            EXIT_FAILURE
        );
    }

    #[test]
    fn thresholds_flag_failures() {
        let args = CompareArgs {
            a: "a".into(),
            b: "b".into(),
            max_rmse_mean: Some(0.1),
            max_sup_mean: None,
            max_time_avg_mean: None,
            max_sup_cov: Some(0.01),
            max_log_mass: None,
            report: None,
        };
        let metrics = CompareMetrics {
            rows: 3,
            rmse_mean: 0.05,
            sup_mean_error: 1.0,
            time_avg_mean_error: 1.0,
            sup_cov_error: 0.02,
            sup_log_mass_error: f64::NAN,
        };
        let r = compare_report(&args, metrics);
        assert!(!r.pass);
        assert_eq!(r.failed.len(), 1);
        assert!(r.failed[0].starts_with("sup_cov_error"));
    }
}
