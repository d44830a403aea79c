use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use markov_oftrl_cli::acceptance;
use markov_oftrl_cli::run::{default_checkpoints, execute, Algo, EtaMode, GameSource, RunConfig};

#[derive(Parser)]
#[command(name = "markov-oftrl", version, about = "Optimistic FTRL dynamics in Markov games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one dynamics and write certified-policy gaps as CSV.
    Run {
        /// `toy` or a path to a JSON game file.
        #[arg(long, default_value = "toy")]
        game: String,
        #[arg(long, value_enum)]
        algo: Algo,
        /// Number of iterations.
        #[arg(long = "T", short = 'T')]
        iterations: usize,
        /// Constant learning rate, or `theory`.
        #[arg(long, default_value = "0.2")]
        eta: EtaMode,
        /// Comma-separated checkpoints; powers of two and T by default.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<usize>>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also emit swap-regret or stage-regret rows.
        #[arg(long)]
        diagnostics: bool,
        /// Omit the CSV header line.
        #[arg(long)]
        no_header: bool,
    },
    /// Run the acceptance checks.
    Accept {
        /// Comma-separated subset of checks to run.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
        /// List the available checks and exit.
        #[arg(long)]
        list: bool,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            game,
            algo,
            iterations,
            eta,
            checkpoints,
            out,
            diagnostics,
            no_header,
        } => {
            let config = RunConfig {
                game: GameSource::parse(&game),
                algo,
                iterations,
                eta,
                checkpoints: checkpoints.unwrap_or_else(|| default_checkpoints(iterations)),
                out,
                diagnostics,
            };
            config.validate()?;
            let outcome = execute(&config)?;
            match &config.out {
                Some(path) => {
                    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
                    outcome.write_csv(BufWriter::new(file), !no_header)?;
                }
                None => outcome.write_csv(io::stdout().lock(), !no_header)?,
            }
            eprint!("{}", outcome.summary());
            Ok(ExitCode::SUCCESS)
        }
        Command::Accept { only, list } => {
            if list {
                for c in acceptance::CRITERIA {
                    println!("{:<16} {}", c.name, c.title);
                }
                return Ok(ExitCode::SUCCESS);
            }
            let selected = acceptance::select(only.as_deref())?;
            let results = acceptance::run_criteria(&selected, |line| println!("{line}"));
            let failed = results.iter().filter(|r| !r.outcome.passed).count();
            println!("{} passed, {failed} failed", results.len() - failed);
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
