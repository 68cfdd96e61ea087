//! Galerkin solve of a coupled system with variable coefficients and
//! reaction terms, printing a coarse view of both components.

use coupled_wmp::auditor::{h1_seminorm, sup_norms};
use coupled_wmp::cli::load_config;
use coupled_wmp::femgrid::{build_mesh, solve};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let job = load_config(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/variable_coupled.json"))?;
    let mesh = build_mesh(job.spec.domain(), &job.cells)?;
    let sol = solve(&job.spec, &mesh, job.quad_order, &job.solver)?;
    let sup = sup_norms(&sol);
    println!("{} nodes, solver {:?}", mesh.node_count(), sol.stats);
    println!("sup |y| = {:.6} at {:?}, boundary sup = {:.6}", sup.sup_interior, sup.argmax, sup.sup_boundary);
    println!("H1 seminorm = {:.6}", h1_seminorm(&sol));
    let (nx, ny) = (job.cells[0] + 1, job.cells[1] + 1);
    for comp in 0..sol.n {
        println!("y{}:", comp + 1);
        for j in (0..ny).rev().step_by(2) {
            let line: Vec<String> = (0..nx).step_by(2).map(|i| format!("{:6.3}", sol.value(comp, j * nx + i))).collect();
            println!("  {}", line.join(" "));
        }
    }
    Ok(())
}
