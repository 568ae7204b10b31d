use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use rollpe_cli::{run, RunConfig};

fn main() -> ExitCode {
    let config = RunConfig::parse();
    match run(&config) {
        Ok(report) => {
            if config.out.is_none() {
                let stdout = std::io::stdout().lock();
                if let Err(e) = report.write(config.format, stdout) {
                    eprintln!("rollpe: {e}");
                    return ExitCode::from(2);
                }
            }
            let _ = std::io::stdout().flush();
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("rollpe: {e}");
            ExitCode::from(2)
        }
    }
}
