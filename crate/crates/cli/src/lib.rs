//! Command-line driver and explorer server for sphx superpixel hierarchies.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod server;
pub mod session;

use args::{Cli, Command};
use error::{CliError, CliResult};

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Convert(a) => commands::convert(&a),
        Command::Graph(a) => commands::graph(&a),
        Command::Hierarchy(a) => commands::hierarchy(&a),
        Command::Embed(a) => commands::embed(&a),
        Command::Refine(a) => commands::refine(&a),
        Command::Colorize(a) => commands::colorize(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Serve(a) => {
            let config = server::ServerConfig {
                max_jobs: a.max_jobs,
                max_points: a.max_points,
                iterations: a.iterations,
            };
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(format!("runtime: {e}")))?;
            runtime
                .block_on(server::serve(&a.run, a.addr, config))
                .map_err(|e| CliError::Data(format!("explorer-server: {e}")))
        }
    }
}

/// Applies the worker-count override from the environment.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(args::THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value.parse().map_err(|_| {
        CliError::Usage(format!(
            "{} must be a positive integer, got '{value}'",
            args::THREADS_ENV
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}
