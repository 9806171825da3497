use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcp::parallel::{current_workers, with_workers, workers_from_env};
use pcp_cli::output::{prepare_dir, Manifest};
use pcp_cli::{
    cmd_ablation, cmd_cond_sweep, cmd_gradcheck, cmd_train, parse_config, CliError, EXIT_CONFIG,
};

#[derive(Parser)]
#[command(
    name = "pcp",
    version,
    about = "Preconditioned discrete-loss training experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Condition numbers over a parameter sweep.
    Cond(Common),
    /// Seeded training trials with aggregate metrics.
    Train(Common),
    /// Drop-tolerance ablation.
    Ablate(Common),
    /// Finite-difference check of the loss gradient.
    Gradcheck(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; trial k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials.
    #[arg(long)]
    trials: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Cmd::Cond(c) => ("cond", c),
        Cmd::Train(c) => ("train", c),
        Cmd::Ablate(c) => ("ablate", c),
        Cmd::Gradcheck(c) => ("gradcheck", c),
    };
    let mut config = match parse_config(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Some(out) = &common.out {
        config.out.clone_from(out);
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(trials) = common.trials {
        config.trials = trials;
    }
    if let Err(e) = config.validate() {
        eprintln!("{e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let out = config.out.clone();
    if let Err(e) = prepare_dir(&out, &config) {
        eprintln!("{e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let code = with_workers(workers_from_env(), || {
        let manifest = Manifest::new(name, &config, current_workers());
        let result: Result<i32, CliError> = match name {
            "cond" => cmd_cond_sweep(&config, &out).map(|o| o.exit_code()),
            "train" => cmd_train(&config, &out).map(|(o, _)| o.exit_code()),
            "ablate" => cmd_ablation(&config, &out).map(|(o, _)| o.exit_code()),
            _ => cmd_gradcheck(&config, &out).map(|(o, _)| o.exit_code()),
        };
        let code = result.unwrap_or_else(|e| {
            eprintln!("{e}");
            e.exit_code()
        });
        if let Err(e) = manifest.finish(&out, code) {
            eprintln!("{e}");
        }
        code
    });
    ExitCode::from(code as u8)
}
