use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;

use cookie_walk::cep::{cep_statistics, write_frontier_csv};
use cookie_walk::classifier::{classify, delta_sweep, SweepOutcome};
use cookie_walk::config::{Command, ExperimentConfig, Format};
use cookie_walk::stats::{par_replicas, Merge, RunningStats};
use cookie_walk::walk::{replica, run_until, write_trajectory};
use cookie_walk::{
    cross_validate, delta, solve_exit, validate_assumptions, Error, OracleInstance, SCHEMA_VERSION, TOOL_VERSION,
};

/// Simulation and diagnostics for excited random walks with bounded jumps.
#[derive(Debug, Parser)]
#[command(name = "cookie-walk", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicas: Option<u64>,
    /// Comma-separated, strictly increasing step horizons.
    #[arg(long, global = true, value_delimiter = ',')]
    horizon: Option<Vec<u64>>,
    /// Worker threads (all cores by default). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Skip grid points or laws that fail the assumption checks.
    #[arg(long, global = true)]
    skip_invalid: bool,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Sub {
    /// Run replicas to the largest horizon and check the martingale X_n - D_n.
    Simulate,
    /// Recurrence/transience verdict for the configured law.
    Classify,
    /// Classify every point of a one-parameter family.
    Sweep,
    /// Exact exit analysis of a finite interval.
    Oracle,
    /// Frontier statistics of the environment seen from the maximum.
    Cep,
    /// Check the assumptions on the configured law and print its drift.
    Validate,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Sub::Simulate => Command::Simulate,
            Sub::Classify => Command::Classify,
            Sub::Sweep => Command::Sweep,
            Sub::Oracle => Command::Oracle,
            Sub::Cep => Command::Cep,
            Sub::Validate => Command::Validate,
        }
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_ASSUMPTION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => EXIT_CONFIG,
                Error::AssumptionFailure(_) => EXIT_ASSUMPTION,
                _ => EXIT_RUNTIME,
            })
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::from_path(path)?;
    let command = cli.command.command();
    if let Some(c) = config.command {
        if c != command {
            return Err(Error::Config(format!(
                "config is for `{}`, not `{}`",
                c.name(),
                command.name()
            )));
        }
    }
    config.command = Some(command);
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(r) = cli.replicas {
        config.replicas = r;
    }
    if let Some(h) = &cli.horizon {
        config.horizons = h.clone();
    }
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    if let Some(dir) = &cli.out {
        config.output.dir = Some(dir.clone());
    }
    if let Some(f) = cli.format {
        config.output.format = f;
    }
    config.validate(command)?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = load(cli)?;
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let artifacts = Artifacts::new(&config)?;
    println!("{TOOL_VERSION}  config {}", &artifacts.hash[..16]);
    match cli.command.command() {
        Command::Validate => validate(&config, cli.skip_invalid, &artifacts),
        Command::Simulate => simulate(&config, cli.skip_invalid, &artifacts),
        Command::Classify => classify_cmd(&config, cli.skip_invalid, &artifacts),
        Command::Sweep => sweep(&config, cli.skip_invalid, &artifacts),
        Command::Oracle => oracle(&config, &artifacts),
        Command::Cep => cep(&config, cli.skip_invalid, &artifacts),
    }
}

struct Artifacts {
    dir: Option<PathBuf>,
    format: Format,
    hash: String,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    tool_version: &'a str,
    schema_version: u32,
    config_hash: &'a str,
    command: &'a str,
    result: &'a T,
}

impl Artifacts {
    fn new(config: &ExperimentConfig) -> Result<Self, Error> {
        if let Some(dir) = &config.output.dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            dir: config.output.dir.clone(),
            format: config.output.format,
            hash: config.hash(),
        })
    }

    fn path(&self, name: &str, ext: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{name}.{ext}")))
    }

    fn json<T: Serialize>(&self, command: &str, result: &T) -> Result<(), Error> {
        let Some(path) = self.path(command, "json") else {
            return Ok(());
        };
        let envelope = Envelope {
            tool_version: TOOL_VERSION,
            schema_version: SCHEMA_VERSION,
            config_hash: &self.hash,
            command,
            result,
        };
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &envelope)?;
        writeln!(w)?;
        w.flush()?;
        report_written(&path);
        Ok(())
    }

    /// Opens `<name>.csv` with the provenance header written as `#` comments.
    fn csv(&self, name: &str, command: &str) -> Result<Option<(PathBuf, BufWriter<File>)>, Error> {
        let Some(path) = self.path(name, "csv") else {
            return Ok(None);
        };
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "# tool_version={TOOL_VERSION}")?;
        writeln!(w, "# schema_version={SCHEMA_VERSION}")?;
        writeln!(w, "# config_hash={}", self.hash)?;
        writeln!(w, "# command={command}")?;
        Ok(Some((path, w)))
    }
}

fn report_written(path: &Path) {
    println!("wrote {}", path.display());
}

/// Builds the law and prints its assumption report; fails unless all pass
/// or `skip_invalid` is set.
fn checked_law(config: &ExperimentConfig, skip_invalid: bool) -> Result<Arc<cookie_walk::EnvironmentLaw>, Error> {
    let law = config.build_law()?;
    let report = validate_assumptions(&law);
    println!("{report}");
    if !report.all_passed() {
        let msg = report.failures().join("; ");
        if !skip_invalid {
            return Err(Error::AssumptionFailure(msg));
        }
        println!("continuing despite failed assumptions: {msg}");
    }
    Ok(Arc::new(law))
}

fn validate(config: &ExperimentConfig, skip_invalid: bool, artifacts: &Artifacts) -> Result<(), Error> {
    let law = config.build_law()?;
    let report = validate_assumptions(&law);
    println!("{report}");
    println!("delta = {}", delta(&law));
    artifacts.json("validate", &report)?;
    if !report.all_passed() && !skip_invalid {
        return Err(Error::AssumptionFailure(report.failures().join("; ")));
    }
    Ok(())
}

#[derive(Debug, Default, Serialize)]
struct SimulateSummary {
    replicas: u64,
    steps: u64,
    start: i64,
    position: RunningStats,
    consumed_drift: RunningStats,
    martingale: RunningStats,
}

impl Merge for SimulateSummary {
    fn merge(&mut self, o: Self) {
        self.position.merge(o.position);
        self.consumed_drift.merge(o.consumed_drift);
        self.martingale.merge(o.martingale);
    }
}

fn simulate(config: &ExperimentConfig, skip_invalid: bool, artifacts: &Artifacts) -> Result<(), Error> {
    let law = checked_law(config, skip_invalid)?;
    let steps = config.max_horizon();
    let start = config.simulate.start;
    let mut summary = par_replicas(config.replicas, |r, acc: &mut SimulateSummary| {
        let (mut s, mut env) = replica(&law, start, r);
        run_until(&mut s, &mut env, |_| false, steps);
        acc.position.push(s.position() as f64);
        acc.consumed_drift.push(s.ledger().total());
        acc.martingale.push(s.ledger().martingale() - start as f64);
    });
    summary.replicas = config.replicas;
    summary.steps = steps;
    summary.start = start;
    let m = summary.martingale.estimate();
    println!("delta = {}", delta(&law));
    println!("after {steps} steps over {} replicas:", config.replicas);
    println!("  mean X_n           = {:.6}", summary.position.mean());
    println!("  mean D_n           = {:.6}", summary.consumed_drift.mean());
    println!(
        "  mean X_n - X_0 - D_n = {:.6} (se {:.6}, z {:.3})",
        m.mean,
        m.std_error,
        m.z_score(0.0)
    );
    match artifacts.format {
        Format::Json => artifacts.json("simulate", &summary)?,
        Format::Csv => {
            if let Some((path, w)) = artifacts.csv("trajectory", "simulate")? {
                let (mut s, mut env) = replica(&law, start, config.simulate.trajectory_replica);
                write_trajectory(&mut s, &mut env, steps, w)?;
                report_written(&path);
            }
        }
    }
    Ok(())
}

fn classify_cmd(config: &ExperimentConfig, skip_invalid: bool, artifacts: &Artifacts) -> Result<(), Error> {
    let law = checked_law(config, skip_invalid)?;
    let result = classify(&law, &config.classifier())?;
    print!("{result}");
    match artifacts.format {
        Format::Json => artifacts.json("classify", &result)?,
        Format::Csv => {
            if let Some((path, w)) = artifacts.csv("classify", "classify")? {
                let mut w = csv::Writer::from_writer(w);
                w.write_record(["horizon", "returned", "return_fraction", "beta_hat", "beta_ci_lo", "beta_ci_hi"])?;
                for p in &result.escape.horizons {
                    w.write_record([
                        p.horizon.to_string(),
                        p.returned.to_string(),
                        p.return_fraction.to_string(),
                        p.beta_hat.to_string(),
                        p.beta_ci_lo.to_string(),
                        p.beta_ci_hi.to_string(),
                    ])?;
                }
                w.flush()?;
                report_written(&path);
            }
        }
    }
    Ok(())
}

fn sweep(config: &ExperimentConfig, skip_invalid: bool, artifacts: &Artifacts) -> Result<(), Error> {
    let spec = config.sweep.as_ref().expect("validated");
    let family = |p: f64, seed: u64| spec.family.law(p, seed);
    let table = delta_sweep(family, &spec.grid, &config.classifier(), config.seed(), skip_invalid)?;
    println!("{:>10} {:>8} {:>9} {:>20}  verdict", "parameter", "delta", "beta_hat", "CI");
    for row in &table.rows {
        match &row.outcome {
            SweepOutcome::Classified(c) => {
                let top = c.escape.top();
                println!(
                    "{:>10} {:>8.4} {:>9.5} [{:>8.5}, {:>8.5}]  {}{} (theorem: {})",
                    row.parameter,
                    c.delta,
                    top.beta_hat,
                    top.beta_ci_lo,
                    top.beta_ci_hi,
                    c.verdict,
                    if c.boundary { " [boundary]" } else { "" },
                    c.predicted
                );
            }
            SweepOutcome::Skipped { reason } => println!("{:>10} skipped: {reason}", row.parameter),
        }
    }
    println!("beta_hat non-decreasing in delta: {}", table.beta_monotone_in_delta);
    match artifacts.format {
        Format::Json => artifacts.json("sweep", &table)?,
        Format::Csv => {
            if let Some((path, w)) = artifacts.csv("sweep", "sweep")? {
                table.write_csv(w)?;
                report_written(&path);
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleResult {
    analysis: cookie_walk::ExitAnalysis,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_validation: Option<cookie_walk::ValidationReport>,
}

fn oracle(config: &ExperimentConfig, artifacts: &Artifacts) -> Result<(), Error> {
    let spec = config.oracle.as_ref().expect("validated");
    let instance = OracleInstance::try_from(spec.instance.clone())?;
    let analysis = solve_exit(&instance)?;
    println!(
        "interval ({}, {}), start {}, {} transient states",
        instance.lower(),
        instance.upper(),
        instance.start(),
        analysis.transient_states
    );
    println!("  P(exit up)          = {:.12}", analysis.p_up);
    println!("  E[X_T]              = {:.12}", analysis.expected_exit_position);
    println!("  E[D_T]              = {:.12}", analysis.expected_consumed_drift);
    println!("  E[T]                = {:.12}", analysis.expected_exit_time);
    println!("  optional stopping residual = {:.3e}", analysis.optional_stopping_residual);
    println!("  solve residual             = {:.3e}", analysis.solve_residual);
    let cross_validation = if spec.validate_replicas > 0 {
        let report = cross_validate(&instance, spec.validate_replicas, config.seed())?;
        println!(
            "  Monte Carlo check over {} replicas: max |z| = {:.3} ({})",
            report.replicas,
            report.max_abs_z,
            if report.passed { "pass" } else { "FAIL" }
        );
        Some(report)
    } else {
        None
    };
    match artifacts.format {
        Format::Json => artifacts.json(
            "oracle",
            &OracleResult {
                analysis,
                cross_validation,
            },
        )?,
        Format::Csv => {
            if let Some((path, w)) = artifacts.csv("oracle_exit_law", "oracle")? {
                let mut w = csv::Writer::from_writer(w);
                w.write_record(["exit_position", "probability"])?;
                for &(z, p) in analysis.exit_position_law.atoms() {
                    w.write_record([z.to_string(), p.to_string()])?;
                }
                w.flush()?;
                report_written(&path);
            }
        }
    }
    Ok(())
}

fn cep(config: &ExperimentConfig, skip_invalid: bool, artifacts: &Artifacts) -> Result<(), Error> {
    let law = checked_law(config, skip_invalid)?;
    let c = &config.cep;
    let stats = cep_statistics(&law, c.frontier, &c.lags, config.replicas, c.max_steps);
    println!("frontier n = {} over {} replicas", c.frontier, config.replicas);
    println!("  overshoot histogram: {:?}", stats.overshoot_histogram);
    let r = &stats.right_drift_rate;
    println!(
        "  D+_(tau_n) / n = {:.5} (se {:.5}){}",
        r.estimate.mean,
        r.estimate.std_error,
        if r.flagged { " [censored]" } else { "" }
    );
    for (k, e) in &stats.consumed_drift_at_origin {
        println!(
            "  lag {k:>4}: consumed drift at origin = {:.5} (se {:.5}){}",
            e.estimate.mean,
            e.estimate.std_error,
            if e.flagged { " [censored]" } else { "" }
        );
    }
    match artifacts.format {
        Format::Json => artifacts.json("cep", &stats)?,
        Format::Csv => {
            if let Some((path, w)) = artifacts.csv("cep_frontier", "cep")? {
                let lag = c.lags.first().copied().unwrap_or(0);
                write_frontier_csv(&law, c.frontier, lag, config.replicas, c.max_steps, w)?;
                report_written(&path);
            }
        }
    }
    Ok(())
}
