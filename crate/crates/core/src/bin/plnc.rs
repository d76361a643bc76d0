use std::io::Write;
use std::process::ExitCode;

use plnc::cli::{self, CliError};

fn main() -> ExitCode {
    match cli::run(std::env::args_os()).and_then(|out| {
        let stdout = out.emit()?;
        if let Some(summary) = &out.summary {
            eprintln!("{summary}");
        }
        Ok(stdout)
    }) {
        Ok(Some(csv)) => {
            let mut lock = std::io::stdout().lock();
            if lock.write_all(csv.as_bytes()).and_then(|_| lock.flush()).is_err() {
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(CliError::Clap(e)) => e.exit(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
