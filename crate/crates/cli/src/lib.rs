//! Command-line runner for the elliptic-lab experiments.
//!
//! Every experiment reads its parameters and pass/fail thresholds from a TOML
//! file, writes one CSV (or JSON) table per experiment plus `summary.json`,
//! and exits with status 0 only when every declared criterion holds.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

pub mod config;
pub mod experiments;
pub mod report;
pub mod tensors;

use config::{ConfigError, ExperimentConfig};
use experiments::{ExpError, ExperimentOutput};
use report::{ExperimentSummary, ResultRow, RunSummary, SCHEMA_VERSION};

/// Built-in configuration used when `--config` is absent.
pub const DEFAULT_PRESET: &str = include_str!("../presets/default.toml");

/// Overrides the output directory of the config file (but not `--out`).
pub const OUT_ENV: &str = "ELAB_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "elab", version, about = "Elliptic boundary value problem experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment file; the built-in default preset when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the seed of the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Garding constants, the A_rho window and the plate convergence study.
    Garding,
    /// Perturbation series over epsilon and (p, s), and the lattice heat map.
    PerturbSweep,
    /// Norm equivalences, Holder checks, embeddings and growth exponents.
    Norms,
    /// Weighted Poincare ratios and the Caccioppoli monitor.
    Poincare,
    /// Newton potential inversion, adjointness and ratio tables.
    Newton,
    /// Pairing identity and operator-norm duality.
    Duality,
    /// Every experiment present in the config.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Garding,
    Perturb,
    Norms,
    Poincare,
    Newton,
    Duality,
}

impl Experiment {
    pub const ALL: [Experiment; 6] =
        [Experiment::Garding, Experiment::Perturb, Experiment::Norms, Experiment::Poincare, Experiment::Newton, Experiment::Duality];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Garding => "garding",
            Experiment::Perturb => "perturb",
            Experiment::Norms => "norms",
            Experiment::Poincare => "poincare",
            Experiment::Newton => "newton",
            Experiment::Duality => "duality",
        }
    }

    fn present(self, cfg: &ExperimentConfig) -> bool {
        match self {
            Experiment::Garding => cfg.garding.is_some(),
            Experiment::Perturb => cfg.perturb.is_some(),
            Experiment::Norms => cfg.norms.is_some(),
            Experiment::Poincare => cfg.poincare.is_some() || cfg.caccioppoli.is_some(),
            Experiment::Newton => cfg.newton.is_some(),
            Experiment::Duality => cfg.duality.is_some(),
        }
    }

    pub fn run(self, cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExpError> {
        match self {
            Experiment::Garding => experiments::garding::run(cfg),
            Experiment::Perturb => experiments::perturb::run(cfg),
            Experiment::Norms => experiments::norms::run(cfg),
            Experiment::Poincare => experiments::poincare::run(cfg),
            Experiment::Newton => experiments::newton::run(cfg),
            Experiment::Duality => experiments::duality::run(cfg),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("experiment {experiment} failed: {source}")]
    Experiment { experiment: &'static str, source: elliptic_lab::LabError },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("thread pool: {0}")]
    Threads(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILED,
        }
    }
}

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub format: Format,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub summary: RunSummary,
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_str(DEFAULT_PRESET)?,
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn output_dir(opts: &RunOptions, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(o) = &opts.out {
        return o.clone();
    }
    if let Some(o) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(o);
    }
    PathBuf::from(cfg.output.clone().unwrap_or_else(|| "results".into()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io { path: parent.display().to_string(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

/// Runs the experiments and writes all artifacts.
pub fn run_experiments(which: &[Experiment], opts: &RunOptions) -> Result<RunReport, CliError> {
    let cfg = load_config(opts.config.as_deref(), opts.seed)?;
    let out_dir = output_dir(opts, &cfg);
    let go = || -> Result<Vec<(Experiment, ExperimentOutput, f64)>, CliError> {
        let mut done = Vec::new();
        for &e in which {
            let start = Instant::now();
            let out = e.run(&cfg).map_err(|err| match err {
                ExpError::Config(c) => CliError::Config(c),
                ExpError::Lab(l) => CliError::Experiment { experiment: e.name(), source: l },
            })?;
            done.push((e, out, start.elapsed().as_secs_f64()));
        }
        Ok(done)
    };
    let done = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Threads(e.to_string()))?
            .install(go)?,
        None => go()?,
    };
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (e, out, secs) in done {
        let (text, ext) = match opts.format {
            Format::Csv => (report::to_csv(&out.rows), "csv"),
            Format::Json => (report::to_json(&out.rows), "json"),
        };
        write(&out_dir.join(format!("{}.{ext}", e.name())), &text)?;
        for (rel, body) in &out.artifacts {
            write(&out_dir.join(rel), body)?;
        }
        summaries.push(ExperimentSummary {
            experiment: e.name().into(),
            rows: out.rows.len(),
            checks: out.rows.iter().filter(|r| r.pass.is_some()).count(),
            failures: report::failures(&out.rows).len(),
            runtime_seconds: secs,
        });
        rows.extend(out.rows);
    }
    let failures = RunSummary::failure_lines(&rows);
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        seed: cfg.seed,
        threads: opts.threads,
        experiments: summaries,
        pass: failures.is_empty(),
        failures,
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Io { path: out_dir.display().to_string(), source: e })?;
    summary.write(&out_dir).map_err(|e| CliError::Io { path: out_dir.join("summary.json").display().to_string(), source: e })?;
    Ok(RunReport { out_dir, rows, summary })
}

/// Parses `args` (program name first), runs, prints, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let opts = RunOptions { config: cli.config, out: cli.out, seed: cli.seed, threads: cli.threads, format: cli.format };
    let which: Vec<Experiment> = match cli.command {
        Command::Garding => vec![Experiment::Garding],
        Command::PerturbSweep => vec![Experiment::Perturb],
        Command::Norms => vec![Experiment::Norms],
        Command::Poincare => vec![Experiment::Poincare],
        Command::Newton => vec![Experiment::Newton],
        Command::Duality => vec![Experiment::Duality],
        Command::All => match load_config(opts.config.as_deref(), opts.seed) {
            Ok(cfg) => Experiment::ALL.into_iter().filter(|e| e.present(&cfg)).collect(),
            Err(e) => {
                eprintln!("elab: {}", CliError::from(e));
                return EXIT_CONFIG;
            }
        },
    };
    match run_experiments(&which, &opts) {
        Ok(rep) => {
            for s in &rep.summary.experiments {
                println!("{}: {} rows, {} checks, {} failed ({:.1} s)", s.experiment, s.rows, s.checks, s.failures, s.runtime_seconds);
            }
            println!("results in {}", rep.out_dir.display());
            if rep.summary.pass {
                EXIT_OK
            } else {
                eprintln!("{} criteria failed:", rep.summary.failures.len());
                for f in &rep.summary.failures {
                    eprintln!(
                        "  {} [{}] {} = {} (criterion {} = {})",
                        f.experiment,
                        f.case,
                        f.quantity,
                        report::fmt(f.value),
                        f.criterion,
                        report::fmt(f.threshold)
                    );
                }
                EXIT_FAILED
            }
        }
        Err(e) => {
            eprintln!("elab: {e}");
            e.exit_code()
        }
    }
}
