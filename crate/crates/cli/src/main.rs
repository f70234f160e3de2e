use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use flipper_cli::sweep::{cmd_sweep, Axis};
use flipper_cli::{cmd_check, cmd_eval, cmd_train, Failure};

/// Train, evaluate and ablate flip policies for a single-legged hopper.
#[derive(Parser)]
#[command(name = "flipper", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    RewardMode,
    Mor,
    LoadReg,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Axis {
        match a {
            AxisArg::RewardMode => Axis::RewardMode,
            AxisArg::Mor => Axis::Mor,
            AxisArg::LoadReg => Axis::LoadReg,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Roll out a checkpoint deterministically and export a per-step CSV.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Output CSV; defaults to eval.csv in the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and compare the variants along one ablation axis.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Base run config; built-in defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the oracle suites.
    Check {
        /// Run a single suite by name.
        #[arg(long)]
        suite: Option<String>,
        /// Negative control: replace the barrier with a broken one.
        #[arg(long, hide = true)]
        corrupt_barrier: bool,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config } => cmd_train(&config),
        Command::Eval { ckpt, config, episodes, out } => cmd_eval(&ckpt, &config, episodes, out.as_deref()),
        Command::Sweep { axis, seeds, config } => cmd_sweep(config.as_deref(), axis.into(), seeds),
        Command::Check { suite, corrupt_barrier } => cmd_check(suite.as_deref(), corrupt_barrier),
    };
    if let Err(failure) = result {
        if !matches!(failure, Failure::Check) {
            eprintln!("error: {failure}");
        }
        std::process::exit(failure.exit_code());
    }
}
