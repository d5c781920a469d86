use std::process::ExitCode;

use clap::Parser;

mod commands;
#[cfg(test)]
mod tests;

use commands::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(parse_status(&e));
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// `--help` and `--version` succeed; anything else clap rejects is a usage error.
fn parse_status(e: &clap::Error) -> u8 {
    if e.use_stderr() {
        1
    } else {
        0
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use rotalith::Error;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Divergence { .. } | Error::NotRotation { .. } | Error::Singular { .. } => 3,
                Error::InvalidParameter(_)
                | Error::BandwidthTooSmall { .. }
                | Error::BandwidthMismatch { .. }
                | Error::DegreeOverflow { .. } => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<commands::NonFinite>().is_some() {
            return 3;
        }
    }
    2
}
