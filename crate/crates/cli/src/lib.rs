//! Configuration, orchestration and serialisation for the `strongcoupling`
//! command line tool.

pub mod config;
pub mod output;
pub mod run;

use std::fmt;
use std::path::{Path, PathBuf};

use strongcoupling_core::Error;

use config::{ConfigError, RunConfig};
use output::{write_all, Format, Provenance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Spectrum,
    OracleCompare,
    Scan,
    DumpLattice,
    ConstraintsCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::OracleCompare => "oracle-compare",
            Command::Scan => "scan",
            Command::DumpLattice => "dump-lattice",
            Command::ConstraintsCheck => "constraints-check",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Numerical(Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Numerical(e) => match e.stage() {
                Some(stage) => write!(f, "numerical failure in stage `{stage}`: {}", e.root()),
                None => write!(f, "numerical failure: {e}"),
            },
            CliError::Io(e) => write!(f, "cannot write output: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Clone, Debug)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub serial: bool,
    pub fixed_source: bool,
    pub output_dir: PathBuf,
    pub format: Format,
}

#[derive(Debug)]
pub struct RunSummary {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

pub fn load_config(path: Option<&Path>, fixed_source: bool) -> Result<RunConfig, ConfigError> {
    let cfg = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    Ok(if fixed_source { cfg.fixed_source() } else { cfg })
}

/// Load, validate, compute and write.
pub fn execute(inv: &Invocation) -> Result<RunSummary, CliError> {
    let cfg = load_config(inv.config.as_deref(), inv.fixed_source).map_err(CliError::Config)?;
    let outcome = match inv.command {
        Command::Spectrum => run::run_spectrum(&cfg, inv.serial),
        Command::OracleCompare => run::run_oracle_compare(&cfg, inv.serial),
        Command::Scan => run::run_scan(&cfg, inv.serial),
        Command::DumpLattice => run::run_dump_lattice(&cfg, inv.serial),
        Command::ConstraintsCheck => run::run_constraints_check(&cfg, inv.serial),
    }
    .map_err(CliError::Numerical)?;
    let prov = Provenance::new(inv.command.name(), &cfg, inv.serial);
    let written = write_all(&inv.output_dir, inv.format, &cfg, &prov, &outcome.tables).map_err(CliError::Io)?;
    Ok(RunSummary { written, warnings: outcome.warnings })
}
