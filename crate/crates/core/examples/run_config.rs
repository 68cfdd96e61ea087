//! Runs one command on a config, as the binary would.
//!
//! cargo run --example run_config -- audit configs/laplace.json /tmp/out

use std::path::PathBuf;

use coupled_wmp::cli::{load_config, run_command, Command};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let cmd = match args.next().as_deref().unwrap_or("check") {
        "check" => Command::Check,
        "solve" => Command::Solve,
        "audit" => Command::Audit,
        "convergence" => Command::Convergence,
        other => return Err(format!("unknown command {other}").into()),
    };
    let config = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/laplace.json").into());
    let out: PathBuf = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("coupled-wmp-out"));
    let outcome = run_command(cmd, &load_config(&config)?, &out)?;
    print!("{}", outcome.stdout);
    for path in &outcome.artifacts {
        eprintln!("wrote {}", path.display());
    }
    std::process::exit(outcome.exit_code);
}
