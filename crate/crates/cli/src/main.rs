use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cvqkd_runner::{out_dir, run_scenario, CliError, OutputKind, Scenario, SweepRange};

#[derive(Parser)]
#[command(name = "cvqkd", version, about = "LLO CV-QKD simulation and key-rate analysis")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every output listed in the config's [scenario] table.
    Run { config: PathBuf },
    /// Key rate against fibre length.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        #[arg(long, default_value_t = 150.0)]
        to: f64,
        #[arg(long, default_value_t = 5.0)]
        step: f64,
    },
    /// Excess-noise budget for the configured link.
    Budget { config: PathBuf },
    /// Transmittance error with and without the least-squares stage.
    JitterStudy {
        config: PathBuf,
        #[arg(long)]
        ppm: Option<f64>,
        #[arg(long)]
        seeds: Option<usize>,
        /// Quantum pulses per block.
        #[arg(long)]
        pulses: Option<usize>,
    },
}

type Adjust = Box<dyn FnOnce(&mut Scenario)>;

fn execute(cli: Cli, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (config, adjust): (PathBuf, Adjust) = match cli.command {
        Command::Run { config } => (config, Box::new(|_| {})),
        Command::Sweep { config, from, to, step } => (
            config,
            Box::new(move |s| {
                s.outputs = vec![OutputKind::KeyrateSweep];
                s.sweep = SweepRange { from_km: from, to_km: to, step_km: step };
            }),
        ),
        Command::Budget { config } => (config, Box::new(|s| s.outputs = vec![OutputKind::Budget])),
        Command::JitterStudy { config, ppm, seeds, pulses } => (
            config,
            Box::new(move |s| {
                s.outputs = vec![OutputKind::JitterStudy];
                if let Some(v) = ppm {
                    s.jitter.ppm = v;
                }
                if let Some(v) = seeds {
                    s.jitter.seeds = v;
                }
                if let Some(v) = pulses {
                    s.sim.block_pulses = v;
                }
            }),
        ),
    };
    let mut scenario = Scenario::load(&config)?;
    adjust(&mut scenario);
    log::info!("writing to {}", dir.display());
    run_scenario(&scenario, dir)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli, &out_dir()) {
        Ok(paths) => {
            for path in paths {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
