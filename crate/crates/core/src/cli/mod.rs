//! The `tempsurp` command line: `sweep`, `calibrate`, `analyze` and `check`.
//!
//! Exit codes: 0 on success, 1 on errors and theorem violations, 2 when a
//! fit failed to converge (and for usage errors).

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{check_with_kernel, cmd_analyze, cmd_calibrate, cmd_check, cmd_sweep, Status};
pub use config::{ModelArg, RunConfig, SchemeArg, ScopeArg};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "tempsurp", version, about = "Temperature-scaled surprisal for reading-time modelling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit base and target models across a temperature grid.
    Sweep(Flags),
    /// ECE, classwise ECE and HCE of an archive at one temperature.
    Calibrate(Flags),
    /// Residual analyses by linguistic factor at T*.
    Analyze(Flags),
    /// Numerical checks of the entropy results.
    Check(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML file with any of the settings below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Logit archive (.scla).
    #[arg(long)]
    pub archive: Option<PathBuf>,
    /// Word table (NDJSON).
    #[arg(long)]
    pub words: Option<PathBuf>,
    /// Reading-time table (CSV).
    #[arg(long)]
    pub rts: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `paper` (30 points from 1 to 10) or a comma-separated list of temperatures.
    #[arg(long)]
    pub grid: Option<String>,
    /// Regression formulas [default: 1].
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Calibration bins [default: 15].
    #[arg(long)]
    pub bins: Option<usize>,
    /// Calibration binning; both when omitted.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Temperature for `calibrate` [default: 1].
    #[arg(long)]
    pub t: Option<f64>,
    /// T* for HCE and `analyze`; `analyze` reads it from sweep.json when omitted.
    #[arg(long)]
    pub tstar: Option<f64>,
    /// Words whose surprisal is scaled [default: all].
    #[arg(long, value_enum)]
    pub scope: Option<ScopeArg>,
    /// Seed for `check`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when omitted. Never changes results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Random distributions per vocabulary size in `check` [default: 10000].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: Option<u64>,
    /// Rows in the per-word reports.
    #[arg(long)]
    pub top_n: Option<usize>,
}

impl Flags {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_toml_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { c.$f = v.clone().into(); })*};
        }
        over!(grid, model, bins, t, scope, seed, top_n);
        macro_rules! over_opt {
            ($($f:ident),*) => {$(if self.$f.is_some() { c.$f = self.$f.clone(); })*};
        }
        over_opt!(archive, words, rts, out, scheme, tstar, workers);
        if let Some(n) = self.trials {
            c.trials = n as usize;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (flags, cmd): (&Flags, fn(&RunConfig) -> Result<Status>) = match &cli.command {
        Command::Sweep(f) => (f, cmd_sweep),
        Command::Calibrate(f) => (f, cmd_calibrate),
        Command::Analyze(f) => (f, cmd_analyze),
        Command::Check(f) => (f, cmd_check),
    };
    match flags.resolve().and_then(|c| cmd(&c)) {
        Ok(s) => s.code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
