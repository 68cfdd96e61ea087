//! BiCGStab against dense LU on assembled systems of increasing order.

use coupled_wmp::cli::load_config;
use coupled_wmp::femgrid::{apply_dirichlet, assemble, build_mesh};
use coupled_wmp::krylov::{solve_bicgstab, solve_dense_lu};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let job = load_config(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example_b.json"))?;
    for cells in [4, 8, 16, 24, 30] {
        let mesh = build_mesh(job.spec.domain(), &[cells, cells])?;
        let sys = apply_dirichlet(&assemble(&job.spec, &mesh, 2)?, job.spec.lower().g(), &mesh)?;
        let lu = solve_dense_lu(&sys.matrix.to_dense(), &sys.rhs)?;
        let (it, stats) = solve_bicgstab(&sys.matrix, &sys.rhs, 1e-10, 10 * sys.order())?;
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gap = it.iter().zip(&lu).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        println!("order {:>5}  nnz {:>6}  iterations {:>4}  residual {:.2e}  gap {:.2e}", sys.order(), sys.matrix.nnz(), stats.iterations, stats.residual, gap);
    }
    Ok(())
}
