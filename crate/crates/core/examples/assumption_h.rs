//! Weight matrices E, F, M of the structural assumption for the product
//! system b = [[1, 0.5], [0, 1]], G = [[2, 1], [1, 2]], and a product draw
//! where the diagonal bound holds but K is singular.

use coupled_wmp::exprlang::CoefficientField;
use coupled_wmp::hypocheck::{check_assumption_h, check_product_family, CheckOptions};
use coupled_wmp::sampling::BoxDomain;
use coupled_wmp::sysmodel::{product_family_build, solve_e, LowerOrderData};

fn grid(rows: &[&[&str]]) -> Vec<Vec<CoefficientField>> {
    rows.iter().map(|r| r.iter().map(|s| CoefficientField::parse(s, 2).unwrap()).collect()).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let domain = BoxDomain::unit(2)?;
    let spec = product_family_build(
        grid(&[&["1", "0.5"], &["0", "1"]]),
        grid(&[&["2", "1"], &["1", "2"]]),
        LowerOrderData::zero(2, 2),
        domain.clone(),
    )?;
    let data = solve_e(&spec, &[0.5, 0.5])?;
    println!("E = {:?}", data.e.rows());
    println!("F = {:?}", data.f_mat.rows());
    println!("independence residual {:.1e}, identity residual {:.1e}", data.independence_residual, data.identity_residual);

    let opts = CheckOptions::default();
    let samples = opts.samples_for(&domain);
    let outcome = check_assumption_h(&spec, &samples, &opts);
    for rec in &outcome.records {
        println!("{:<28} pass {:<5} value {:.12}", rec.name, rec.pass, rec.value);
    }

    let skewed = product_family_build(grid(&[&["1", "2"], &["0", "1"]]), grid(&[&["1", "0"], &["0", "1"]]), LowerOrderData::zero(2, 2), domain)?;
    for rec in check_product_family(skewed.family().unwrap(), &samples, opts.margin) {
        println!("{:<28} pass {:<5} {}", rec.name, rec.pass, rec.notes.join("; "));
    }
    Ok(())
}
