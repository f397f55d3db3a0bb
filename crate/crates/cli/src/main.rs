use std::process::ExitCode;

use transport_cli::{run, CliError, RunConfig};

fn exit(code: i32) -> ExitCode {
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}

fn main() -> ExitCode {
    let config = match RunConfig::from_args(std::env::args_os()) {
        Ok(c) => c,
        Err(CliError::Usage(e)) => {
            // clap formats help and version itself and picks the stream.
            let _ = e.print();
            return exit(CliError::Usage(e).exit_code());
        }
        Err(e) => {
            eprintln!("error: {e}");
            return exit(e.exit_code());
        }
    };
    let report = run(&config);
    let json = match report.to_json() {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return exit(e.exit_code());
        }
    };
    if let Some(path) = &config.output {
        if let Err(e) = std::fs::write(path, &json) {
            eprintln!("error: {}: {e}", path.display());
            return exit(transport_cli::error::EXIT_VALIDATION);
        }
    }
    if config.json {
        print!("{json}");
    } else {
        for line in &report.summary {
            println!("{line}");
        }
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
    }
    exit(report.exit_code())
}
