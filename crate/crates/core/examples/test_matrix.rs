//! The cofactor test-function matrix T of an isotropic coefficient array and
//! the identities it satisfies.

use coupled_wmp::densecore::SquareMatrix;
use coupled_wmp::sysmodel::{cancellation_residual, pairing_sum, test_matrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = SquareMatrix::from_rows(&[[3.0, 1.0, -0.5], [-1.0, 2.5, 0.25], [0.5, 0.75, 2.0]]);
    let bundle = test_matrix(&a)?;
    println!("a =");
    for row in a.rows() {
        println!("  {row:?}");
    }
    println!("det A = {:.12}, det B = {:.12}", bundle.det_a, bundle.det_b);
    println!("T =");
    for row in bundle.t.rows() {
        println!("  {:?}", row.iter().map(|v| format!("{v:+.6}")).collect::<Vec<_>>());
    }
    println!("cancellation residual   {:.3e}", cancellation_residual(&a, &bundle.t));
    for j in 0..3 {
        println!("sum_l a^(l{j}) T^({j}l)     {:.15}", pairing_sum(&a, &bundle.t, j));
    }
    println!("det A / det B           {:.15}", bundle.det_a / bundle.det_b);
    let rho = a.symmetrize().min_eigenvalue_sym()?;
    println!("rho = {rho:.6}: det A >= rho^3 ({:.6} >= {:.6}), det B >= rho^2 ({:.6} >= {:.6})", bundle.det_a, rho.powi(3), bundle.det_b, rho.powi(2));
    Ok(())
}
