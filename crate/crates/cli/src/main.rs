use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use saddle::config::ExperimentConfig;
use saddle::harness::{self, format_sig, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "saddle", version, about = "Saddle-point dynamics experiments and certificates")]
struct Cli {
    /// Base seed; overrides the config value
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config value
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Record every n-th iterate
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    stride: Option<u64>,
    /// Run cells on one thread
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every configured algorithm and write trajectory CSVs
    Run { config: PathBuf },
    /// Run the invariant suite; exits 1 on any violation
    Verify { config: PathBuf },
    /// Print spectral quantities and iteration bounds
    Spectra { config: PathBuf },
    /// Exact earth mover's distance between two point files
    Emd { a: PathBuf, b: PathBuf },
}

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn options(cli: &Cli) -> RunOptions {
    let mut opts = RunOptions {
        seed: cli.seed,
        out: cli.out.clone(),
        stride: cli.stride.map(|s| s as usize),
        ..Default::default()
    };
    if cli.sequential {
        opts.exec = saddle::par::Execution::Sequential;
    }
    opts
}

fn execute(cli: &Cli) -> saddle::Result<u8> {
    let opts = options(cli);
    match &cli.command {
        Command::Run { config } => {
            let config = ExperimentConfig::from_file(config)?;
            println!("{}", harness::cmd_run(&config, &opts)?);
            Ok(0)
        }
        Command::Verify { config } => {
            let config = ExperimentConfig::from_file(config)?;
            let report = harness::cmd_verify(&config, &opts)?;
            println!("{report}");
            if let Some(dir) = &opts.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("verify.csv"), harness::verify_csv(&report)?)?;
            }
            Ok(if report.all_passed() { 0 } else { EXIT_VIOLATION })
        }
        Command::Spectra { config } => {
            let config = ExperimentConfig::from_file(config)?;
            println!("{}", harness::cmd_spectra(&config, &opts)?);
            Ok(0)
        }
        Command::Emd { a, b } => {
            let result = harness::cmd_emd(a, b)?;
            println!("{}", format_sig(result.cost, 9));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
