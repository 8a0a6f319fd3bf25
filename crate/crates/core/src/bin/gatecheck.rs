use std::io::Write;

use clap::Parser;
use gatecheck_core::cli::{run, Cli, RunConfig};

fn main() {
    let config = RunConfig::from(Cli::parse());
    let outcome = run(&config);
    if let Some(msg) = &outcome.diagnostic {
        eprintln!("gatecheck: error: {msg}");
    }
    if let (Some(report), None) = (&outcome.report, &config.output) {
        let mut out = std::io::stdout().lock();
        if out
            .write_all(report.as_bytes())
            .and_then(|_| out.flush())
            .is_err()
        {
            std::process::exit(2);
        }
    }
    std::process::exit(outcome.exit_code);
}
