use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emc_bench::{run_experiment, CliError, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "emc", version, about = "Run EM-C stochastic control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulation paths per surrogate (N).
        #[arg(long)]
        paths: Option<usize>,
        /// SA iterations per subproblem (m).
        #[arg(long)]
        sa_iters: Option<usize>,
        /// Outer EM-C sweeps (K).
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let Command::Run {
        config,
        out,
        seed,
        paths,
        sa_iters,
        iters,
        threads,
    } = cli.command;
    let mut cfg = ExperimentConfig::load(&config)?;
    cfg.apply(&Overrides {
        output_dir: out,
        seed,
        paths,
        sa_iters,
        iters,
        threads,
    })?;
    let report = run_experiment(&cfg)?;
    for f in &report.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // --help and --version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("emc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
