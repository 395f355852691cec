use std::process::ExitCode;

use clap::Parser;
use semedit_cli::commands::{self, Cli};

/// Error class printed before the message, for scripts.
fn kind(err: &anyhow::Error) -> &'static str {
    use semedit::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<semedit::Error>()) {
        Some(E::Parse { .. }) => "parse",
        Some(E::Io { .. }) => "io",
        Some(E::Invalid(_)) => "invalid",
        Some(E::Degenerate(_)) => "degenerate",
        Some(E::UnknownParam { .. }) => "unknown-param",
        Some(E::OutOfBounds { .. }) => "out-of-bounds",
        Some(E::Checkpoint(_)) => "checkpoint",
        Some(E::Config(_)) => "config",
        Some(E::NonFinite { .. }) => "non-finite",
        None if err.chain().any(|e| e.is::<std::io::Error>()) => "io",
        None => "error",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut message = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !message.contains(&cause) {
                    if !message.is_empty() {
                        message.push_str(": ");
                    }
                    message.push_str(&cause);
                }
            }
            let message = message.replace('\n', " ");
            eprintln!("semedit: error[{}]: {message}", kind(&e));
            ExitCode::FAILURE
        }
    }
}
