//! Thin command line front end over the library pipelines.
//!
//! Usage: `levy-krein <command> --config <file> [--seed N] [--out DIR]
//! [--workers K] [--format csv,json,svg]`. Flags override the matching
//! config fields. Exit codes: 0 success, 2 validation error, 3 numerical
//! diagnostic, 64 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use levy_krein::cli::{self, Command, Format, Invocation, Overrides};

#[derive(Parser)]
#[command(name = "levy-krein", version, about = "Fluctuation pipelines for killed Lévy processes")]
struct Args {
    /// One of: simulate, chain, phi, stable-exit, string, spectral,
    /// wiener-hopf, entropy, rule4.
    command: String,
    /// JSON configuration file (single document, one run).
    #[arg(long)]
    config: PathBuf,
    /// Seed override; a run with no seed anywhere is rejected.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker count override (0 = one per core); results do not depend
    /// on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Artifact kinds to write.
    #[arg(long = "format", value_delimiter = ',')]
    format: Option<Vec<String>>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(64);
        }
    };
    let Some(command) = Command::parse(&args.command) else {
        let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
        eprintln!("error: unknown command '{}'; expected one of {}", args.command, names.join(", "));
        return ExitCode::from(64);
    };
    let formats = match &args.format {
        None => None,
        Some(raw) => {
            let mut list = Vec::with_capacity(raw.len());
            for s in raw {
                match Format::parse(s) {
                    Some(f) => list.push(f),
                    None => {
                        eprintln!("error: unknown format '{s}'; expected csv, json or svg");
                        return ExitCode::from(2);
                    }
                }
            }
            Some(list)
        }
    };
    let inv = Invocation {
        command,
        config_path: args.config,
        overrides: Overrides { seed: args.seed, out: args.out, workers: args.workers, formats },
    };
    ExitCode::from(cli::run(&inv) as u8)
}
