//! `confkit`: command-line front end for the confkit library.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use output::{OutputArgs, Table};

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or configuration: exit 1.
    Usage(String),
    /// A library error: exit 2.
    Domain(confkit::Error),
    /// File or encoding trouble: exit 2.
    Io(String),
}

impl From<confkit::Error> for Failure {
    fn from(e: confkit::Error) -> Self {
        Failure::Domain(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "confkit", version, about = "Eccentricity, distributions, staircases and conformal modulus")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "CONFKIT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the registered maps.
    ListMaps(commands::ListMaps),
    /// Sampled eccentricity profile of a map.
    AnalyzeMap(commands::AnalyzeMap),
    /// Ratio test on equally spaced triples for a map R -> R.
    HCondition(commands::HCondition),
    /// Integrability residual of a plane field at sample points.
    CheckIntegrability(commands::CheckIntegrability),
    /// Horizontal lift of a base path.
    LiftPath(commands::LiftPath),
    /// Endpoint defect of the horizontal lift of a closed loop.
    Holonomy(commands::Holonomy),
    /// Smallest distance at which distribution planes visibly turn.
    Regularity(commands::Regularity),
    /// Staircase surface over a base segment.
    BuildStaircase(commands::BuildStaircase),
    /// Geodesic length and area growth of a staircase surface.
    AreaGrowth(commands::AreaGrowth),
    /// Modulus of a curve family on a cell complex.
    EstimateModulus(commands::EstimateModulus),
    /// Upper bounds for the modulus of curves escaping to large radii.
    Parabolicity(commands::Parabolicity),
    /// End-to-end demonstration on a registry map.
    Demo(commands::Demo),
    /// Run one subcommand described by a TOML file.
    Run(commands::RunConfig),
}

fn parse(args: Vec<String>) -> Result<Cli, ExitCode> {
    Cli::try_parse_from(args).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        }
    })
}

fn execute(cli: Cli) -> ExitCode {
    let pool_built = cli.threads.is_some();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("usage error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Run(cfg) => match cfg.to_argv() {
            Ok(argv) => {
                return match parse(argv) {
                    Ok(inner) if matches!(inner.command, Command::Run(_)) => {
                        eprintln!("usage error: a config file cannot run another config file");
                        ExitCode::from(1)
                    }
                    Ok(inner) => execute(Cli {
                        threads: if pool_built { None } else { inner.threads },
                        command: inner.command,
                    }),
                    Err(code) => code,
                }
            }
            Err(e) => Err(e),
        },
        other => commands::dispatch(other),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error [{}]: {e}", e.name());
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error [Io]: {m}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    match parse(std::env::args().collect()) {
        Ok(cli) => execute(cli),
        Err(code) => code,
    }
}
