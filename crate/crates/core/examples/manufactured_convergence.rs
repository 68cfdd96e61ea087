//! Observed L2 and H1 convergence rates against smooth exact solutions.

use coupled_wmp::auditor::{manufactured_convergence, StudyOptions};
use coupled_wmp::cli::load_config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["laplace.json", "example_b.json"] {
        let job = load_config(format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR")))?;
        let exact = job.exact.as_ref().expect("config lists exact fields");
        let study = manufactured_convergence(&job.spec, exact, &[8, 16, 32, 64], &StudyOptions::default())?;
        println!("{name}");
        print!("{}", study.to_csv());
    }
    Ok(())
}
