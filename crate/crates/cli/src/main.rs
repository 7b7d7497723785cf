mod args;
mod commands;
mod error;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{resolve, Cli, Command, ConfigFile};
use error::{CliError, EXIT_VALIDATION};

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("LEVELSMITH_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::validation(format!(
            "LEVELSMITH_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::new(EXIT_VALIDATION, e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match resolve(cli.command, &file)? {
        Command::Corpus(a) => commands::corpus(a, &mut out),
        Command::Train(a) => commands::train_models(a, &mut out),
        Command::Sample(a) => commands::sample(a, &mut out),
        Command::Eval(a) => commands::eval(a, &mut out),
        Command::Experiment(a) => commands::experiment(a, file.corpus()?, &mut out),
        Command::Render(a) => commands::render(a, &mut out),
    }?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.code).unwrap_or(1))
        }
    }
}
