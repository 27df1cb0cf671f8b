mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::Value;

use experiments::RunContext;
use report::sha256_hex;

#[derive(Parser)]
#[command(name = "ergolab", version, about = "Exact experiments on finite group actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config and write its reports.
    Run {
        /// Path to the JSON config.
        config: PathBuf,
        /// Directory for the report files.
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Caps the size of any system the run may build.
        #[arg(long = "max-N")]
        max_n: Option<u64>,
        /// Overrides the experiment's numeric tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Recorded in the report; execution is serial either way.
        #[arg(long)]
        threads: Option<u32>,
    },
}

// Exit codes: 0 pass, 1 config or IO error, 2 assertion failure. Clap's
// default usage-error code is 2, which would collide, so usage errors are
// remapped to 1 here.
fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    let Command::Run { config, out, seed, max_n, tolerance, threads } = cli.command;

    let raw = match std::fs::read(&config) {
        Ok(raw) => raw,
        Err(e) => {
            eprintln!("config error at /: cannot read {}: {e}", config.display());
            return ExitCode::from(1);
        }
    };
    let root: Value = match serde_json::from_slice(&raw) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error at /: invalid JSON: {e}");
            return ExitCode::from(1);
        }
    };
    let ctx = RunContext {
        seed,
        max_n,
        tolerance,
        threads,
        config_sha256: sha256_hex(&raw),
        version: env!("CARGO_PKG_VERSION"),
    };
    let outcome = match experiments::run(&root, &ctx) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };

    // Reports are written even when the experiment's assertion fails, so
    // the failure can be inspected; config errors above write nothing.
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("cannot create {}: {e}", out.display());
        return ExitCode::from(1);
    }
    for (name, bytes) in &outcome.files {
        let path = out.join(name);
        if let Err(e) = std::fs::write(&path, bytes) {
            eprintln!("cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
        println!("wrote {}", path.display());
    }
    if outcome.pass {
        println!("{}: PASS", outcome.experiment);
        ExitCode::SUCCESS
    } else {
        println!("{}: FAIL", outcome.experiment);
        ExitCode::from(2)
    }
}
