use std::path::PathBuf;
use std::process::ExitCode;

use cepr_cli::config::{load_config, resolve, RawConfig};
use cepr_cli::run::run;
use cepr_core::Experiment;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cepr", version, about = "Kicked two-particle rotor experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Loschmidt echo of the entanglement entropy.
    Echo(RunArgs),
    /// Survival and limit states with absorbing borders.
    Recurrence(RunArgs),
    /// Husimi densities of the Schmidt kets.
    Husimi(RunArgs),
    /// Classical ensemble survival and diffusion.
    Classical(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON config; optional when --preset is given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "CEPR_WORKERS")]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Echo(a) => (Experiment::Echo, a),
        Command::Recurrence(a) => (Experiment::Recurrence, a),
        Command::Husimi(a) => (Experiment::Husimi, a),
        Command::Classical(a) => (Experiment::Classical, a),
    };
    if let Some(w) = args.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: cannot start {w} workers: {e}");
            return ExitCode::from(2);
        }
    }
    let raw = match &args.config {
        Some(path) => match load_config(path) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None if args.preset.is_some() => RawConfig::default(),
        None => {
            eprintln!("error: --config or --preset required");
            return ExitCode::from(2);
        }
    };
    let cfg = match resolve(&raw, experiment, args.preset.as_deref(), args.out.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(meta) => {
            eprintln!(
                "wrote {} ({} s)",
                cfg.output.dir.display(),
                meta.get("wall_time_s").unwrap_or("?")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
