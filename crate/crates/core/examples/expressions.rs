//! Parse coefficient expressions, print their canonical form and estimate
//! their W^{1,inf} norms on a lattice.

use coupled_wmp::exprlang::CoefficientField;
use coupled_wmp::sampling::{BoxDomain, SampleSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let domain = BoxDomain::unit(2)?;
    let samples = SampleSet::lattice(&domain, 21);
    for src in ["x1^2", "2 + sin(3*x1)*cos(x2)", "max(x1, x2) - min(x1, 0.5)", "sqrt(1 + x1*x2) / exp(-x2)"] {
        let field = CoefficientField::parse(src, 2)?;
        let est = field.estimate_w1inf(&samples, 1e-6)?;
        println!("{src:<30} canonical {:<45} f(0.5, 0.25) = {:>10.6}", field.canonical(), field.evaluate(&[0.5, 0.25])?);
        println!("{:<30} sup|f| = {:.6}, sup|grad f| = {:.6}", "", est.sup_abs, est.sup_grad);
    }
    for bad in ["1 + * x1", "x3", "log(x1 - 2)"] {
        match CoefficientField::parse(bad, 2) {
            Err(e) => println!("{bad:<30} rejected: {e}"),
            Ok(f) => match f.evaluate(&[0.5, 0.5]) {
                Err(e) => println!("{bad:<30} evaluation error: {e}"),
                Ok(v) => println!("{bad:<30} = {v}"),
            },
        }
    }
    Ok(())
}
