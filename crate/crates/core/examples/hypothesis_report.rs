//! Full hypothesis report for a config file (default: configs/example_b.json).
//!
//! cargo run --example hypothesis_report -- configs/indefinite.json

use coupled_wmp::cli::{load_config, to_json_string};
use coupled_wmp::hypocheck::full_report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example_b.json").into());
    let job = load_config(&path)?;
    let report = full_report(&job.spec, &job.checks);
    for c in &report.checks {
        let tag = if c.pass { "ok  " } else if c.required { "FAIL" } else { "warn" };
        println!("{tag} {:<30} value {:>14.6e}  threshold {:>14.6e}  at {:?}", c.name, c.value, c.threshold, c.worst_point);
    }
    println!("overall: {}", report.overall);
    if std::env::var_os("REPORT_JSON").is_some() {
        print!("{}", to_json_string(&report));
    }
    Ok(())
}
