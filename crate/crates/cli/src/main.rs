use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use wehrlflux_cli::analysis;
use wehrlflux_cli::run::{self, RunOptions, THREADS_ENV};
use wehrlflux_cli::CliError;
use wehrlflux_core::dicke::FitWindow;

#[derive(Parser)]
#[command(name = "wehrlflux", version, about = "Husimi entropy production for driven-dissipative Kerr and Dicke models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every point of a JSON run configuration and write a CSV.
    Run {
        config: PathBuf,
        /// Record failing points as comments instead of aborting.
        #[arg(long)]
        keep_going: bool,
        #[arg(long, value_name = "K", env = THREADS_ENV)]
        threads: Option<usize>,
    },
    /// Rescale a Kerr sweep to x = N(eps/eps_c - 1) and report collapse quality.
    Collapse {
        results: PathBuf,
        #[arg(long = "eps-c", value_name = "V")]
        eps_c: f64,
    },
    /// Fit log10 Pi_d against log10|lambda_c - lambda| on both sides of a Dicke scan.
    FitDivergence {
        results: PathBuf,
        /// Relative distance window lo,hi on |lambda/lambda_c - 1|.
        #[arg(long, value_name = "LO,HI", value_parser = analysis::parse_window)]
        window: FitWindow,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out: Result<String, CliError> = match cli.command {
        Command::Run { config, keep_going, threads } => {
            run::run(&config, &RunOptions { keep_going, threads }).map(|s| s.to_string())
        }
        Command::Collapse { results, eps_c } => analysis::collapse(&results, eps_c),
        Command::FitDivergence { results, window } => analysis::fit_divergence(&results, window),
    };
    match out {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("wehrlflux: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
