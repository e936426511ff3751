//! `netabs`: certify, abstract, aggregate and simulate networks of switched subsystems.
//!
//! Exit codes: 0 ok, 2 infeasible certificate or small-gain, 3 invalid input,
//! 4 numeric failure (including a violated envelope).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netabs::{Error, ErrorClass};

use commands::{Context, Status};
use config::Config;

#[derive(Parser)]
#[command(
    name = "netabs",
    version,
    about = "Compositional abstractions for networks of switched linear subsystems"
)]
struct Cli {
    /// TOML config shared by all subcommands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 1 is the sequential reference mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize gains and local certificates; writes bundle.toml.
    Certify {
        /// Network file; overrides `network` in the config.
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Build abstractions and report the interconnection residuals.
    Abstract {
        /// Network file; overrides `network` in the config.
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Gain matrix, spectral radius bound and weights.
    Smallgain {
        /// Network file; overrides `network` in the config.
        #[arg(long)]
        network: Option<PathBuf>,
        /// Bundle file; defaults to `<out>/bundle.toml`.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Closed-loop run with trajectory files and the envelope check.
    Simulate {
        /// Network file; overrides `network` in the config.
        #[arg(long)]
        network: Option<PathBuf>,
        /// Bundle file; defaults to `<out>/bundle.toml`.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Simulation steps.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Microgrid ring scenario.
    Microgrid {
        /// Number of DGUs in the ring.
        #[arg(long)]
        size: Option<usize>,
        /// Simulation steps.
        #[arg(long)]
        horizon: Option<usize>,
        /// `paper` or `weak`.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Re-check a stored bundle against the network.
    Verify {
        /// Network file; overrides `network` in the config.
        #[arg(long)]
        network: Option<PathBuf>,
        /// Bundle file; defaults to `<out>/bundle.toml`.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Certify { .. } => "certify",
            Command::Abstract { .. } => "abstract",
            Command::Smallgain { .. } => "smallgain",
            Command::Simulate { .. } => "simulate",
            Command::Microgrid { .. } => "microgrid",
            Command::Verify { .. } => "verify",
        }
    }

    fn apply(&self, cfg: &mut Config) {
        let (network, bundle) = match self {
            Command::Certify { network } | Command::Abstract { network } => (network, &None),
            Command::Smallgain { network, bundle } | Command::Verify { network, bundle } => {
                (network, bundle)
            }
            Command::Simulate {
                network,
                bundle,
                horizon,
            } => {
                if let Some(h) = horizon {
                    cfg.simulate.horizon = *h;
                }
                (network, bundle)
            }
            Command::Microgrid {
                size,
                horizon,
                preset,
            } => {
                if let Some(n) = size {
                    cfg.microgrid.size = *n;
                }
                if let Some(h) = horizon {
                    cfg.microgrid.horizon = *h;
                }
                if let Some(p) = preset {
                    cfg.microgrid.preset = p.clone();
                }
                (&None, &None)
            }
        };
        if network.is_some() {
            cfg.network = network.clone();
        }
        if bundle.is_some() {
            cfg.bundle = bundle.clone();
        }
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Infeasible => 2,
        ErrorClass::Validation | ErrorClass::Io => 3,
        ErrorClass::Numeric => 4,
    }
}

fn run(cli: Cli) -> Result<Status, (Option<Box<Context>>, Error)> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| (None, Error::InvalidParameter(format!("thread pool: {e}"))))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| (None, e))?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    cli.command.apply(&mut cfg);
    let ctx = Context::new(cfg, cli.out).map_err(|e| (None, e))?;
    let result = match cli.command {
        Command::Certify { .. } => commands::certify(&ctx),
        Command::Abstract { .. } => commands::abstraction(&ctx),
        Command::Smallgain { .. } => commands::smallgain(&ctx),
        Command::Simulate { .. } => commands::simulate(&ctx),
        Command::Microgrid { .. } => commands::microgrid(&ctx),
        Command::Verify { .. } => commands::verify(&ctx),
    };
    result.map_err(|e| (Some(Box::new(ctx)), e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Infeasible) => ExitCode::from(2),
        Ok(Status::EnvelopeViolated) | Ok(Status::Failed) => ExitCode::from(4),
        Err((ctx, e)) => {
            eprintln!("error: {e}");
            if let Some(ctx) = ctx {
                if let Err(w) = ctx.failure(name, &e) {
                    eprintln!("could not write failure report: {w}");
                }
            }
            ExitCode::from(exit_code(e.class()))
        }
    }
}
