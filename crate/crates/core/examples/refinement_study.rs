//! Sup norm of the coupled product system under mesh refinement.

use coupled_wmp::auditor::{refinement_study, StudyOptions};
use coupled_wmp::cli::load_config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let job = load_config(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example_b.json"))?;
    let study = refinement_study(&job.spec, &[8, 16, 32, 64, 128], &StudyOptions::default())?;
    for row in &study.levels {
        let stats = row.solver.expect("solved");
        println!(
            "{:>4} cells  sup {:.10}  H1 {:.6}  {:?} in {} iterations",
            row.cells,
            row.sup_interior.unwrap(),
            row.h1_seminorm.unwrap(),
            stats.path,
            stats.iterations
        );
    }
    println!("relative change over the last two levels: {:.3e}", study.relative_change.unwrap());
    Ok(())
}
