use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;

use passive_nets::optimizer::ProgramMode;
use passive_nets::traffic::TrafficConfig;
use passive_nets_cli::{resolve_mode, run_simulate, run_solve, run_traffic_demo, run_verify, scenario, CliError};

/// Simulate passive networks and solve their dual network optimization problems.
#[derive(Parser)]
#[command(name = "passive-nets", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario; writes trajectory.csv and steady_state.json.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the scenario's network program; writes solution.json.
    Solve {
        scenario: PathBuf,
        #[arg(long)]
        mode: Option<ProgramMode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate and solve, then check that the steady state is optimal; writes verify.json.
    Verify {
        scenario: PathBuf,
        #[arg(long)]
        mode: Option<ProgramMode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random road of n cars; writes trajectory.csv, clusters.json and velocities.csv.
    TrafficDemo {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma0: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma1: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.6)]
        kappa: f64,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        #[arg(long, default_value_t = 1000.0)]
        horizon: f64,
        /// Forced free-flow offsets V⁰, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        v0: Option<Vec<f64>>,
        /// Forced sensitivities V¹, comma separated.
        #[arg(long, value_delimiter = ',')]
        v1: Option<Vec<f64>>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn init_logging() {
    let level = match std::env::var("PASSIVE_NETS_LOG").as_deref() {
        Ok("quiet") => LevelFilter::Off,
        Ok("debug") => LevelFilter::Debug,
        Ok("info") | Err(_) => LevelFilter::Info,
        Ok(other) => {
            eprintln!("PASSIVE_NETS_LOG={other:?} not recognised (quiet, info, debug); using info");
            LevelFilter::Info
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scenario: path, out } => {
            let s = scenario::load(&path)?;
            run_simulate(&s, &s.output_dir(out.as_deref())).map(|_| ())
        }
        Command::Solve {
            scenario: path,
            mode,
            out,
        } => {
            let s = scenario::load(&path)?;
            run_solve(&s, resolve_mode(&s, mode), &s.output_dir(out.as_deref())).map(|_| ())
        }
        Command::Verify {
            scenario: path,
            mode,
            out,
        } => {
            let s = scenario::load(&path)?;
            run_verify(&s, resolve_mode(&s, mode), &s.output_dir(out.as_deref())).map(|_| ())
        }
        Command::TrafficDemo {
            n,
            sigma0,
            sigma1,
            seed,
            kappa,
            dt,
            horizon,
            v0,
            v1,
            out,
        } => {
            let cfg = TrafficConfig {
                n,
                sigma0,
                sigma1,
                seed,
                kappa,
                dt,
                horizon,
                v0,
                v1,
                ..Default::default()
            };
            run_traffic_demo(&cfg, &out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // printed even when logging is quiet
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
