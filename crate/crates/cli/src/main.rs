use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hypobgk::experiment::{self, Command, RunOptions, EXIT_INVALID};
use hypobgk::Execution;

/// Certified decay rates and spectral simulations for the linearized BGK
/// equation with uncertain collision frequency.
#[derive(Parser, Debug)]
#[command(name = "hypobgk", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Compute the decay-rate certificate.
    Certify(RunArgs),
    /// Check the matrix inequality over k and a sigma grid.
    Verify(RunArgs),
    /// Simulate level 0 and compare entropies with the decay envelope.
    Simulate(RunArgs),
    /// Propagate z-derivative levels and compare with their envelopes.
    Derivatives(RunArgs),
    /// Sweep over lengths, one model parameter and z.
    Sweep(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides HYPOBGK_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for random initial data.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiply the certified mu before verification (for constructing failures).
    #[arg(long, hide = true)]
    debug_mu_scale: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Certify(a) => (Command::Certify, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Derivatives(a) => (Command::Derivatives, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    ExitCode::from(run(command, args) as u8)
}

fn run(command: Command, args: RunArgs) -> i32 {
    let exec = match args.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return EXIT_INVALID;
        }
        Some(1) => Execution::Sequential,
        Some(n) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: cannot start thread pool: {e}");
                return EXIT_INVALID;
            }
            Execution::Parallel
        }
        None => Execution::Parallel,
    };
    let out_dir = args.out.or_else(|| std::env::var_os("HYPOBGK_OUT").map(PathBuf::from));
    let opts = RunOptions { out_dir, exec, seed: args.seed, mu_scale: args.debug_mu_scale };
    let result = experiment::load_config(&args.config).and_then(|cfg| experiment::run(command, cfg, &opts));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.report);
            for a in &outcome.alarms {
                eprintln!("alarm: {a}");
            }
            for (_, f) in &outcome.failures {
                eprintln!("error: {f}");
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            experiment::exit_code_for(&e)
        }
    }
}
