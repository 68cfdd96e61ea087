//! Scalar Laplace problems never exceed their boundary maximum on any grid.

use coupled_wmp::auditor::sup_norms;
use coupled_wmp::exprlang::CoefficientField;
use coupled_wmp::femgrid::{build_mesh, solve};
use coupled_wmp::krylov::SolverConfig;
use coupled_wmp::sampling::BoxDomain;
use coupled_wmp::sysmodel::{IsotropicSpec, LowerOrderData, SystemSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let domain = BoxDomain::unit(2)?;
    for g in ["sin(3*x1) + cos(2*x2)", "x1*x2 - 0.5", "exp(x1 - x2)", "abs(x1 - 0.5)"] {
        let lower = LowerOrderData::zero(1, 2).with_g(vec![CoefficientField::parse(g, 2)?])?;
        let spec: SystemSpec = IsotropicSpec::new(vec![vec![CoefficientField::parse("1", 2)?]], lower, domain.clone())?.into();
        for cells in [8, 32, 64] {
            let mesh = build_mesh(&domain, &[cells, cells])?;
            let sup = sup_norms(&solve(&spec, &mesh, 2, &SolverConfig::default())?);
            println!("g = {g:<24} {cells:>3}x{cells:<3} interior {:.12}  boundary {:.12}", sup.sup_interior, sup.sup_boundary);
        }
    }
    Ok(())
}
