use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sse::commands;
use sse::config::{FEEDER, REDUCED};
use sse::{CliError, Config};

#[derive(Parser)]
#[command(name = "sse", version, about = "Secure multi-observer estimation for sampled Lur'e systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML). Defaults to the bundled five-customer feeder.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config key, e.g. `--set sampling.T_bar_s=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve both design stages and write design.json.
    Design {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate with a design; several scales produce sweep.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_delimiter = ',')]
        attack_scale: Vec<f64>,
    },
    /// Re-check the certificates stored in a design file.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        design: PathBuf,
        /// Also run the configured scenario and check the Lyapunov function along it.
        #[arg(long)]
        simulate: bool,
    },
    /// Design, simulate and verify with a bundled scenario.
    Reproduce {
        #[command(flatten)]
        common: Common,
        /// Use the (5, 2) bank instead of the reduced (3, 1) one.
        #[arg(long)]
        full_bank: bool,
        #[arg(long)]
        attack_scale: Option<f64>,
    },
    /// One simulation per attack scale, run in parallel.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_delimiter = ',')]
        attack_scale: Vec<f64>,
    },
}

fn load(common: &Common, default: &str) -> Result<Config, CliError> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?,
        None => default.to_string(),
    };
    let mut cfg = Config::from_toml(&text, &common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Design { common } => commands::cmd_design(&load(&common, FEEDER)?, &common.out),
        Command::Simulate { common, design, attack_scale } => {
            commands::cmd_simulate(&load(&common, FEEDER)?, &design, &common.out, &attack_scale)
        }
        Command::Verify { common, design, simulate } => {
            commands::cmd_verify(&load(&common, FEEDER)?, &design, Some(&common.out), simulate)
        }
        Command::Reproduce { common, full_bank, attack_scale } => {
            let cfg = load(&common, if full_bank { FEEDER } else { REDUCED })?;
            let scale = attack_scale.unwrap_or(cfg.attack.scale);
            commands::cmd_reproduce(&cfg, &common.out, scale)
        }
        Command::Sweep { common, design, attack_scale } => {
            commands::cmd_sweep(&load(&common, FEEDER)?, &design, &common.out, &attack_scale)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit()
        }
    }
}
