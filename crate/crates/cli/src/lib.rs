//! Command-line front end: argument parsing, config merging, output stamping.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure
//! (including equivalence and equivariance checks that ran but failed).

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod stamp;

use std::ffi::OsString;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, EXIT_OK, EXIT_USAGE};
use stamp::Stamp;

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GenData(_) => "gen-data",
        Command::Train(_) => "train",
        Command::TrainEnsemble(_) => "train-ensemble",
        Command::Canonicalize(_) => "canonicalize",
        Command::VerifyEquivalence(_) => "verify-equivalence",
        Command::CountSymmetries(_) => "count-symmetries",
        Command::Minmass(_) => "minmass",
        Command::Mmd(_) => "mmd",
        Command::Metrics(_) => "metrics",
        Command::Collapse(_) => "collapse",
        Command::TrackPermutations(_) => "track-permutations",
        Command::EquivarianceCheck(_) => "equivariance-check",
        Command::Marginals(_) => "marginals",
        Command::PipelineToy(_) => "pipeline-toy",
    }
}

fn dispatch(cli: &Cli, stamp: &Stamp) -> Result<(), CliError> {
    use commands::*;
    let seed = cli.seed;
    match &cli.command {
        Command::GenData(a) => gen_data(a, seed, stamp),
        Command::Train(a) => train(a, seed, stamp),
        Command::TrainEnsemble(a) => train_ensemble(a, seed, stamp).map(|_| ()),
        Command::Canonicalize(a) => canonicalize_cmd(a, stamp),
        Command::VerifyEquivalence(a) => verify(a, seed, stamp),
        Command::CountSymmetries(a) => count(a, stamp),
        Command::Minmass(a) => minmass(a, stamp),
        Command::Mmd(a) => mmd(a, seed, stamp),
        Command::Metrics(a) => metrics(a, stamp),
        Command::Collapse(a) => collapse(a, seed, stamp),
        Command::TrackPermutations(a) => track(a, seed, stamp),
        Command::EquivarianceCheck(a) => equivariance(a, seed, stamp),
        Command::Marginals(a) => marginals_cmd(a, stamp),
        Command::PipelineToy(a) => pipeline_toy(a, seed, stamp),
    }
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run(argv: Vec<OsString>) -> i32 {
    let argv = match config::merge_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("netsym: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log_level).try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("netsym: usage error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let stamp = Stamp::new(&argv, command_name(&cli.command), cli.seed, cli.threads);
    match dispatch(&cli, &stamp) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("netsym: {e}");
            e.exit_code()
        }
    }
}
