//! The `tempdep` command line.

pub mod args;
pub mod commands;
pub mod error;
pub mod resolve;

use std::ffi::OsString;

use clap::Parser;

use args::{Cli, Command};
use commands::Ctx;
use error::{CliError, Kind};
use resolve::Resolver;

pub fn run(cli: Cli) -> Result<(), CliError> {
    let resolver = Resolver::load(cli.config.as_deref())?;
    let seed = resolver.or(cli.seed, "seed", 0)?;
    let workers: Option<usize> = resolver.opt(cli.workers, "workers")?;
    let verbose = cli.verbose.max(resolver.or(None, "verbose", 0)?);
    let ctx = Ctx {
        resolver,
        seed,
        workers,
        verbose,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .kind("internal")?;
    pool.install(|| match cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Attack(a) => commands::attack(&ctx, a),
        Command::Transform(a) => commands::transform(&ctx, a),
        Command::Detect(a) => commands::detect(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
    })
}

/// Parses arguments, runs, and returns the process exit code. Failures are
/// printed to stderr as one JSON line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::new("usage", e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
