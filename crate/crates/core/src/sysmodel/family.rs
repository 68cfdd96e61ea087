//! The product coefficient family `a^{ij}_{pq} = b^{ij} g_pq` with identity
//! weights `h^{ij} = delta_ij` and `f_pq = L_pq / g_pq^{n-1}`, materialized
//! as `det(b) g_pq`.

use super::{AnisotropicSpec, HWeights, LowerOrderData, ModelError};
use crate::exprlang::{CoefficientField, Expr};
use crate::sampling::BoxDomain;

/// The inputs of a product-family spec, kept for the family-specific checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductFamily {
    /// `b[i][j] = b^{ij}`, `n x n`.
    pub b: Vec<Vec<CoefficientField>>,
    /// `g[p][q] = g_pq`, `m x m`, symmetric.
    pub g: Vec<Vec<CoefficientField>>,
}

/// Determinant of a matrix of expressions by Laplace expansion along the
/// first row, dropping products with a literal zero factor.
pub fn determinant_expr(entries: &[Vec<Expr>]) -> Expr {
    let n = entries.len();
    match n {
        0 => Expr::num(1.0),
        1 => entries[0][0].clone(),
        _ => {
            let mut acc: Option<Expr> = None;
            for col in 0..n {
                let head = &entries[0][col];
                if head.is_zero_constant() {
                    continue;
                }
                let minor: Vec<Vec<Expr>> = entries[1..]
                    .iter()
                    .map(|row| row.iter().enumerate().filter(|(c, _)| *c != col).map(|(_, e)| e.clone()).collect())
                    .collect();
                let sub = determinant_expr(&minor);
                if sub.is_zero_constant() {
                    continue;
                }
                let term = Expr::mul(head.clone(), sub);
                acc = Some(match acc {
                    None if col % 2 == 0 => term,
                    None => Expr::Neg(Box::new(term)),
                    Some(prev) if col % 2 == 0 => Expr::add(prev, term),
                    Some(prev) => Expr::sub(prev, term),
                });
            }
            acc.unwrap_or(Expr::num(0.0))
        }
    }
}

/// Materializes the product-family spec: all `n^2 m^2` products, identity
/// `h`, and `f_pq = det(b) g_pq` as expressions.
pub fn product_family_build(
    b: Vec<Vec<CoefficientField>>,
    g: Vec<Vec<CoefficientField>>,
    lower: LowerOrderData,
    domain: BoxDomain,
) -> Result<AnisotropicSpec, ModelError> {
    let n = b.len();
    let m = domain.dim();
    if n == 0 {
        return Err(ModelError::NoEquations);
    }
    for (i, row) in b.iter().enumerate() {
        if row.len() != n {
            return Err(ModelError::Shape { what: format!("b[{i}] columns"), expected: n, found: row.len() });
        }
    }
    if g.len() != m {
        return Err(ModelError::Shape { what: "G rows".into(), expected: m, found: g.len() });
    }
    for (p, row) in g.iter().enumerate() {
        if row.len() != m {
            return Err(ModelError::Shape { what: format!("G[{p}] columns"), expected: m, found: row.len() });
        }
    }
    for p in 0..m {
        for q in p + 1..m {
            if g[p][q].canonical() != g[q][p].canonical() {
                return Err(ModelError::NotSymmetric { what: "G".into(), i: p, j: q });
            }
        }
    }
    let product = |i: usize, j: usize, p: usize, q: usize| -> Expr {
        Expr::mul(b[i][j].tree().clone(), g[p][q].tree().clone())
    };
    let mut spec = AnisotropicSpec::new(n, lower, domain, |i, j, p, q| {
        CoefficientField::from_expr(product(i, j, p, q), m).expect("dimension validated")
    })?;

    let one = CoefficientField::constant(1.0, m);
    let zero = CoefficientField::constant(0.0, m);
    let h = (0..n).map(|i| (0..n).map(|j| if i == j { one.clone() } else { zero.clone() }).collect()).collect();
    // L_pq = g_pq^n det b, so L_pq / g_pq^(n-1) = det(b) g_pq without the division
    let b_t: Vec<Vec<Expr>> = (0..n).map(|r| (0..n).map(|c| b[c][r].tree().clone()).collect()).collect();
    let det_b = determinant_expr(&b_t);
    let mut f_pq = Vec::with_capacity(m);
    for row in &g {
        let mut out = Vec::with_capacity(m);
        for g_pq in row {
            out.push(CoefficientField::from_expr(Expr::mul(det_b.clone(), g_pq.tree().clone()), m)?);
        }
        f_pq.push(out);
    }
    spec = spec.with_weights(HWeights::new(h, f_pq)?)?;
    for fld in b.iter().flatten().chain(g.iter().flatten()) {
        if fld.dim() != m {
            return Err(ModelError::FieldDimension { what: "family field".into(), expected: m, found: fld.dim() });
        }
    }
    Ok(spec.with_family(ProductFamily { b, g }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densecore::SquareMatrix;
    use crate::exprlang::parse_expression;

    #[test]
    fn determinant_expression_matches_numeric() {
        let vals = [[2.0, -1.0, 0.5], [0.0, 3.0, 1.0], [4.0, 0.25, -2.0]];
        let entries: Vec<Vec<Expr>> = vals.iter().map(|r| r.iter().map(|&v| Expr::num(v)).collect()).collect();
        let field = CoefficientField::from_expr(determinant_expr(&entries), 1).unwrap();
        let want = SquareMatrix::from_rows(&vals).determinant();
        assert!((field.evaluate(&[0.0]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn scalar_family() {
        let d = BoxDomain::unit(2).unwrap();
        let b = vec![vec![parse_expression("1", 2).unwrap()]];
        let g = vec![
            vec![parse_expression("2 + x1", 2).unwrap(), parse_expression("0.5", 2).unwrap()],
            vec![parse_expression("0.5", 2).unwrap(), parse_expression("3", 2).unwrap()],
        ];
        let spec = product_family_build(b, g.clone(), LowerOrderData::zero(1, 2), d).unwrap();
        let x = [0.25, 0.75];
        let w = spec.weights().unwrap();
        for p in 0..2 {
            for q in 0..2 {
                let gv = g[p][q].evaluate(&x).unwrap();
                assert_eq!(spec.field(0, 0, p, q).evaluate(&x).unwrap(), gv);
                assert_eq!(w.f_field(p, q).evaluate(&x).unwrap(), gv);
            }
        }
    }

    #[test]
    fn identity_family_is_decoupled_laplacian() {
        let d = BoxDomain::unit(2).unwrap();
        let c = |s: &str| parse_expression(s, 2).unwrap();
        let b = vec![vec![c("1"), c("0")], vec![c("0"), c("1")]];
        let g = vec![vec![c("1"), c("0")], vec![c("0"), c("1")]];
        let spec = product_family_build(b, g, LowerOrderData::zero(2, 2), d).unwrap();
        let q = spec.form_matrix_at(&[0.5, 0.5]).unwrap();
        assert_eq!(q, SquareMatrix::identity(4));
    }

    #[test]
    fn asymmetric_g_rejected() {
        let d = BoxDomain::unit(2).unwrap();
        let c = |s: &str| parse_expression(s, 2).unwrap();
        let b = vec![vec![c("1")]];
        let g = vec![vec![c("1"), c("0.5")], vec![c("0.4"), c("1")]];
        assert!(matches!(
            product_family_build(b, g, LowerOrderData::zero(1, 2), d),
            Err(ModelError::NotSymmetric { .. })
        ));
    }
}
